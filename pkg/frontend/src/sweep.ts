import { collectSubsets } from './subsets.js';
import type { ProbeConfig } from './types.js';

/**
 * What a subset sweep needs from the rendering side. The worker wires
 * this to a real context; tests and the fixture recorder substitute a
 * scripted one.
 */
export interface SubsetHarness {
  draw(mask: number): void;
  /** Resolves only after every queued draw has completed on the GPU. */
  fence(): Promise<unknown>;
  now(): number;
  dispose?(): void;
}

/** Wall-clock sweep: draw, fence, read the elapsed time. */
export function runSubsetSweep(
  cfg: ProbeConfig,
  harness: SubsetHarness,
  onProgress?: (done: number, total: number) => void,
): Promise<number[]> {
  return collectSubsets(
    cfg,
    async (mask) => {
      const t0 = harness.now();
      harness.draw(mask);
      await harness.fence();
      return harness.now() - t0;
    },
    onProgress,
  );
}
