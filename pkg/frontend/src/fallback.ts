import { ExtensionUnavailable, OffscreenUnsupported, WebGLUnavailable } from './types.js';
import type { ProbeConfig } from './types.js';

/**
 * Firefox quantizes performance.now() far more coarsely than the other
 * engines, so the stall has to run longer to climb above the clock
 * granularity. Doubling is applied before any trace is collected and the
 * doubled value is what gets reported, since it is what actually ran.
 */
export function applyBrowserQuirks(cfg: ProbeConfig, userAgent: string): ProbeConfig {
  if (/firefox/i.test(userAgent)) {
    return { ...cfg, stallLoopLength: cfg.stallLoopLength * 2 };
  }
  return cfg;
}

function toOnscreen(cfg: ProbeConfig): ProbeConfig {
  return {
    ...cfg,
    method: 'onscreen',
    subsetMode: false,
    // a subset config carries the subset iteration default, which is
    // meaningless frame-locked; switch to the onscreen default
    iterationsPerPoint: cfg.subsetMode ? 11 : cfg.iterationsPerPoint,
    pointCount: cfg.subsetMode ? 16 : cfg.pointCount,
  };
}

/**
 * Where to go when a method turns out unavailable on this machine:
 * gpu falls back to offscreen when the timer extension is missing, and
 * anything without worker-canvas support falls back to the frame-locked
 * onscreen path. Hard failures (no WebGL at all) do not remap.
 */
export function fallbackConfig(cfg: ProbeConfig, err: unknown): ProbeConfig | null {
  if (err instanceof WebGLUnavailable) return null;
  if (cfg.method === 'gpu' && err instanceof ExtensionUnavailable) {
    return { ...cfg, method: 'offscreen' };
  }
  if (cfg.method !== 'onscreen' && err instanceof OffscreenUnsupported) {
    return toOnscreen(cfg);
  }
  return null;
}
