import { ContextLost } from './types.js';
import type { ProbeConfig } from './types.js';

/** requestAnimationFrame-shaped scheduler, injectable for tests. */
export type FrameScheduler = (cb: (timestampMs: number) => void) => void;

export interface OnscreenDeps {
  requestFrame: FrameScheduler;
  draw(stall: number): void;
  lost?(): boolean;
}

export interface OnscreenResult {
  timings: number[];
  refreshPeriodMs: number;
}

const WARMUP_FRAMES = 20;

/**
 * Point-major stall order: every iteration for point 0, then every
 * iteration for point 1, and so on. The backend relies on this layout
 * when it folds timings into a per-point matrix.
 */
export function stallSequence(pointCount: number, iterationsPerPoint: number): number[] {
  const seq: number[] = [];
  for (let p = 0; p < pointCount; p++) {
    for (let i = 0; i < iterationsPerPoint; i++) seq.push(p);
  }
  return seq;
}

function nextFrame(deps: OnscreenDeps): Promise<number> {
  return new Promise((resolve) => deps.requestFrame(resolve));
}

function median(xs: number[]): number {
  const s = [...xs].sort((a, b) => a - b);
  const m = s.length >> 1;
  return s.length % 2 ? s[m] : (s[m - 1] + s[m]) / 2;
}

/**
 * Frame-locked collection. Each stall value is drawn once per frame and
 * the reading is the gap between consecutive frame timestamps, so a draw
 * that overruns its frame budget shows up as one or more extra refresh
 * periods. Warmup frames (stall disabled) establish the refresh period.
 */
export async function collectOnscreen(cfg: ProbeConfig, deps: OnscreenDeps): Promise<OnscreenResult> {
  if (cfg.subsetMode) throw new Error('subset mode is not frame-locked');

  const checkLost = () => {
    if (deps.lost && deps.lost()) throw new ContextLost('webgl context lost');
  };

  // -1 never matches a point index, so warmup draws are stall-free.
  const warmupDeltas: number[] = [];
  let prev = await nextFrame(deps);
  for (let i = 0; i < WARMUP_FRAMES; i++) {
    checkLost();
    deps.draw(-1);
    const ts = await nextFrame(deps);
    warmupDeltas.push(ts - prev);
    prev = ts;
  }
  const refreshPeriodMs = median(warmupDeltas);

  const timings: number[] = [];
  for (const stall of stallSequence(cfg.pointCount, cfg.iterationsPerPoint)) {
    checkLost();
    deps.draw(stall);
    const ts = await nextFrame(deps);
    timings.push(ts - prev);
    prev = ts;
  }
  checkLost();
  return { timings, refreshPeriodMs };
}
