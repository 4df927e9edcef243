import { WebGLUnavailable, ContextLost } from './types.js';
import type { ProbeConfig } from './types.js';
import { stallVertexShader, FRAGMENT_SHADER } from './shaders.js';

export interface DrawTarget {
  /** Issue one draw pass with the given stall selector. Does not block. */
  draw(stall: number): void;
  /** True once the underlying context has been lost. */
  lost(): boolean;
  dispose(): void;
}

type AnyCanvas = HTMLCanvasElement | OffscreenCanvas;

export function getGl(canvas: AnyCanvas): WebGL2RenderingContext {
  // cast past the union: both canvas kinds take the same id + attributes
  const getContext = canvas.getContext.bind(canvas) as (
    id: string,
    opts?: Record<string, unknown>,
  ) => unknown;
  const gl = getContext('webgl2', {
    antialias: false,
    depth: false,
    alpha: false,
    preserveDrawingBuffer: false,
    powerPreference: 'high-performance',
  }) as WebGL2RenderingContext | null;
  if (!gl) throw new WebGLUnavailable('webgl2 context unavailable');
  return gl;
}

function compile(gl: WebGL2RenderingContext, type: number, source: string): WebGLShader {
  const shader = gl.createShader(type);
  if (!shader) throw new WebGLUnavailable('createShader failed');
  gl.shaderSource(shader, source);
  gl.compileShader(shader);
  if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS) && !gl.isContextLost()) {
    const log = gl.getShaderInfoLog(shader);
    gl.deleteShader(shader);
    throw new WebGLUnavailable('shader compile failed: ' + log);
  }
  return shader;
}

export function buildProgram(gl: WebGL2RenderingContext, vs: string, fs: string): WebGLProgram {
  const program = gl.createProgram();
  if (!program) throw new WebGLUnavailable('createProgram failed');
  gl.attachShader(program, compile(gl, gl.VERTEX_SHADER, vs));
  gl.attachShader(program, compile(gl, gl.FRAGMENT_SHADER, fs));
  gl.linkProgram(program);
  if (!gl.getProgramParameter(program, gl.LINK_STATUS) && !gl.isContextLost()) {
    throw new WebGLUnavailable('program link failed: ' + gl.getProgramInfoLog(program));
  }
  return program;
}

/**
 * Set up the stall benchmark pipeline on an existing context: one point
 * per index, all parked at the origin, stall selection via a uniform so
 * successive draws reuse the compiled program.
 */
export function createDrawTarget(gl: WebGL2RenderingContext, cfg: ProbeConfig): DrawTarget {
  const program = buildProgram(
    gl,
    stallVertexShader(cfg.operator, cfg.stallLoopLength, cfg.subsetMode),
    FRAGMENT_SHADER,
  );
  gl.useProgram(program);

  const positions = new Float32Array(cfg.pointCount); // all zeros: origin
  const buffer = gl.createBuffer();
  gl.bindBuffer(gl.ARRAY_BUFFER, buffer);
  gl.bufferData(gl.ARRAY_BUFFER, positions, gl.STATIC_DRAW);
  const loc = gl.getAttribLocation(program, 'aPosition');
  gl.enableVertexAttribArray(loc);
  gl.vertexAttribPointer(loc, 1, gl.FLOAT, false, 0, 0);

  const stallLoc = gl.getUniformLocation(program, 'uStall');
  gl.viewport(0, 0, gl.drawingBufferWidth, gl.drawingBufferHeight);
  gl.clearColor(0, 0, 0, 1);

  return {
    draw(stall: number) {
      gl.uniform1i(stallLoc, stall | 0);
      gl.clear(gl.COLOR_BUFFER_BIT);
      gl.drawArrays(gl.POINTS, 0, cfg.pointCount);
    },
    lost() {
      return gl.isContextLost();
    },
    dispose() {
      gl.deleteBuffer(buffer);
      gl.deleteProgram(program);
    },
  };
}

export function watchContextLoss(canvas: HTMLCanvasElement, onLost: () => void): void {
  canvas.addEventListener('webglcontextlost', (ev) => {
    ev.preventDefault();
    onLost();
  });
}

export { ContextLost };
