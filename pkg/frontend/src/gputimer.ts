import { ExtensionUnavailable } from './types.js';
import type { ProbeConfig } from './types.js';
import { collectSubsets } from './subsets.js';

export interface TimerExtension {
  TIME_ELAPSED_EXT: number;
  GPU_DISJOINT_EXT: number;
}

/** The slice of WebGL2 the timer path touches, shaped for substitution. */
export interface TimerGl {
  readonly QUERY_RESULT: number;
  readonly QUERY_RESULT_AVAILABLE: number;
  getExtension(name: string): unknown;
  createQuery(): object | null;
  deleteQuery(query: object | null): void;
  beginQuery(target: number, query: object): void;
  endQuery(target: number): void;
  getQueryParameter(query: object, pname: number): unknown;
  getParameter(pname: number): unknown;
  flush(): void;
}

const MAX_POLLS = 4000;
const DISJOINT_RETRIES = 3;

function defaultSleep(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

/**
 * Time each subset draw on the GPU itself via EXT_disjoint_timer_query_webgl2.
 * Nanosecond counters, no readback fence needed. Software renderers and some
 * mobile stacks never expose the extension; that surfaces as
 * ExtensionUnavailable so the caller can fall back to wall-clock methods.
 */
export async function collectGpuTimer(
  cfg: ProbeConfig,
  gl: TimerGl,
  draw: (mask: number) => void,
  sleep: () => Promise<void> = defaultSleep,
): Promise<number[]> {
  const ext = gl.getExtension('EXT_disjoint_timer_query_webgl2') as TimerExtension | null;
  if (!ext) throw new ExtensionUnavailable('EXT_disjoint_timer_query_webgl2 missing');

  async function timeOnce(mask: number): Promise<number | null> {
    const query = gl.createQuery();
    if (!query) throw new ExtensionUnavailable('createQuery failed');
    try {
      gl.beginQuery(ext!.TIME_ELAPSED_EXT, query);
      draw(mask);
      gl.endQuery(ext!.TIME_ELAPSED_EXT);
      gl.flush();
      let polls = 0;
      while (!gl.getQueryParameter(query, gl.QUERY_RESULT_AVAILABLE)) {
        if (++polls > MAX_POLLS) throw new ExtensionUnavailable('timer query never resolved');
        await sleep();
      }
      if (gl.getParameter(ext!.GPU_DISJOINT_EXT)) return null; // counter glitched, retry
      const ns = Number(gl.getQueryParameter(query, gl.QUERY_RESULT));
      return ns / 1e6;
    } finally {
      gl.deleteQuery(query);
    }
  }

  return collectSubsets(cfg, async (mask) => {
    for (let attempt = 0; attempt <= DISJOINT_RETRIES; attempt++) {
      const ms = await timeOnce(mask);
      if (ms !== null) return ms;
    }
    throw new ExtensionUnavailable('GPU timer stayed disjoint');
  });
}
