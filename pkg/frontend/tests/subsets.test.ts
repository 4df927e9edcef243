import { describe, it, expect } from 'vitest';
import { collectSubsets } from '../src/subsets.js';
import { runSubsetSweep } from '../src/sweep.js';
import type { SubsetHarness } from '../src/sweep.js';
import type { ProbeConfig } from '../src/types.js';

function cfg(pointCount: number): ProbeConfig {
  return {
    method: 'offscreen',
    operator: 'sinh',
    pointCount,
    iterationsPerPoint: 1,
    subsetMode: true,
    stallLoopLength: 1500,
    endpoint: '/api/v1/traces',
    repeatCount: 7,
    showProgress: false,
  };
}

describe('collectSubsets', () => {
  it('covers all 2^n masks ascending, each exactly once', async () => {
    const seen: number[] = [];
    const timings = await collectSubsets(cfg(10), (mask) => {
      seen.push(mask);
      return mask * 0.001;
    });
    expect(timings).toHaveLength(1024);
    expect(seen).toHaveLength(1024);
    expect(seen[0]).toBe(0);
    expect(seen[seen.length - 1]).toBe(1023);
    expect(seen).toEqual([...seen].sort((a, b) => a - b));
    expect(new Set(seen).size).toBe(1024);
  });

  it('keeps timings aligned with their masks', async () => {
    const timings = await collectSubsets(cfg(4), (mask) => mask + 0.5);
    expect(timings).toEqual(Array.from({ length: 16 }, (_, m) => m + 0.5));
  });

  it('reports progress per mask', async () => {
    const ticks: Array<[number, number]> = [];
    await collectSubsets(cfg(3), () => 1, (done, total) => ticks.push([done, total]));
    expect(ticks).toHaveLength(8);
    expect(ticks[0]).toEqual([1, 8]);
    expect(ticks[7]).toEqual([8, 8]);
  });
});

describe('runSubsetSweep', () => {
  it('measures draw-to-fence wall time per mask', async () => {
    let clock = 50;
    let pending = 0;
    const calls: string[] = [];
    const harness: SubsetHarness = {
      draw(mask) {
        calls.push(`draw:${mask}`);
        pending = 2 + mask * 0.25;
      },
      async fence() {
        calls.push('fence');
        clock += pending;
        pending = 0;
      },
      now: () => clock,
    };
    const timings = await runSubsetSweep(cfg(2), harness);
    expect(timings).toEqual([2, 2.25, 2.5, 2.75]);
    expect(calls).toEqual([
      'draw:0', 'fence', 'draw:1', 'fence', 'draw:2', 'fence', 'draw:3', 'fence',
    ]);
  });
});
