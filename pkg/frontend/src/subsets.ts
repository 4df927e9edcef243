import type { ProbeConfig } from './types.js';

/** Times one draw pass for the given stall mask, in milliseconds. */
export type SubsetTimer = (mask: number) => number | Promise<number>;

/**
 * Subset sweep shared by the worker and GPU-timer paths: every mask from
 * 0 (nothing stalled) through 2^points - 1 (everything stalled), ascending,
 * each visited exactly once. Bit i of the mask stalls point i.
 */
export async function collectSubsets(
  cfg: ProbeConfig,
  timeSubset: SubsetTimer,
  onProgress?: (done: number, total: number) => void,
): Promise<number[]> {
  const total = 2 ** cfg.pointCount;
  const timings: number[] = [];
  for (let mask = 0; mask < total; mask++) {
    timings.push(await timeSubset(mask));
    if (onProgress) onProgress(mask + 1, total);
  }
  return timings;
}
