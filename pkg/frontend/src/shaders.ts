import type { Operator } from './types.js';

// One accumulator step per operator. Seeded from the vertex position and fed
// back into gl_Position so the compiler cannot hoist the loop away.
const STEP: Record<Operator, string> = {
  sin: 'acc = sin(acc);',
  mul: 'acc = acc * 1.000001 + 0.000001;',
  sinh: 'acc = sinh(acc) * 0.5;',
  exp2: 'acc = exp2(acc) * 0.25;',
  pow: 'acc = pow(acc, 0.999);',
  atanh: 'acc = atanh(clamp(acc, -0.9, 0.9)) * 0.5;',
  acosh: 'acc = acosh(max(acc, 1.0)) + 1.0;',
  sqrt: 'acc = sqrt(abs(acc) + 1.0);',
  fract: 'acc = fract(acc) + 0.1;',
  log2: 'acc = log2(abs(acc) + 2.0);',
  tanh: 'acc = tanh(acc) + 0.5;',
};

/**
 * Vertex shader for the stall benchmark (GLSL ES 3.00).
 *
 * Every draw renders point_count one-pixel points at the origin. The
 * stall uniform selects who does extra work: in subset mode it is a bit
 * mask over point indices, otherwise it is compared for equality with
 * the point index. Selected points run the operator loop; everyone else
 * passes through, so each iteration's duration is dominated by whichever
 * execution units hold the stalled points.
 */
export function stallVertexShader(
  operator: Operator,
  loopLength: number,
  subsetMode: boolean,
): string {
  const selected = subsetMode
    ? '((uStall >> aIndex) & 1) == 1'
    : 'aIndex == uStall';
  return `#version 300 es
precision highp float;
precision highp int;

in float aPosition;
flat out float vShade;
uniform int uStall;

void main() {
  int aIndex = gl_VertexID;
  float acc = aPosition + 1.5;
  if (${selected}) {
    for (int i = 0; i < ${Math.max(0, loopLength | 0)}; i++) {
      ${STEP[operator]}
    }
  }
  vShade = acc;
  gl_Position = vec4(aPosition * 0.0 + acc * 1.0e-20, 0.0, 0.0, 1.0);
  gl_PointSize = 1.0;
}
`;
}

export const FRAGMENT_SHADER = `#version 300 es
precision mediump float;
flat in float vShade;
out vec4 outColor;
void main() {
  outColor = vec4(fract(vShade), 0.0, 0.0, 1.0);
}
`;
