import { describe, it, expect } from 'vitest';
import { buildRecord, formatTimestamp, traceJson } from '../src/record.js';
import type { AttributeMap, ProbeConfig } from '../src/types.js';

const CFG: ProbeConfig = {
  method: 'offscreen',
  operator: 'sinh',
  pointCount: 2,
  iterationsPerPoint: 1,
  subsetMode: true,
  stallLoopLength: 1500,
  endpoint: '/api/v1/traces',
  repeatCount: 7,
  showProgress: false,
};

const ATTRS: AttributeMap = { webgl_renderer: 'R', screen_width: 1920 };

function sevenTraces(len = 4): number[][] {
  return Array.from({ length: 7 }, (_, i) => Array.from({ length: len }, (_, j) => i + j * 0.5));
}

describe('formatTimestamp', () => {
  it('drops a zero fraction', () => {
    expect(formatTimestamp(new Date(Date.UTC(2025, 2, 1, 12, 0, 0)))).toBe('2025-03-01T12:00:00Z');
  });

  it('keeps a non-zero fraction', () => {
    expect(formatTimestamp(new Date(Date.UTC(2025, 2, 1, 12, 0, 0, 250)))).toBe(
      '2025-03-01T12:00:00.250Z',
    );
  });
});

describe('traceJson', () => {
  it('uses the wire field names', () => {
    const t = traceJson(CFG, [1, 2, 3, 4]);
    expect(Object.keys(t)).toEqual([
      'method',
      'operator',
      'point_count',
      'iterations_per_point',
      'subset_mode',
      'stall_loop_length',
      'timings',
    ]);
  });

  it('copies the timings', () => {
    const timings = [1, 2, 3, 4];
    const t = traceJson(CFG, timings);
    timings[0] = 99;
    expect(t.timings[0]).toBe(1);
  });
});

describe('buildRecord', () => {
  it('assembles the full wire object', () => {
    const when = new Date(Date.UTC(2025, 2, 1, 12, 0, 0));
    const record = buildRecord(CFG, 'client-1', when, ATTRS, sevenTraces());
    expect(Object.keys(record)).toEqual([
      'client_id',
      'collected_at',
      'attributes',
      'traces',
      'true_device',
    ]);
    expect(record.client_id).toBe('client-1');
    expect(record.collected_at).toBe('2025-03-01T12:00:00Z');
    expect(record.true_device).toBeNull();
    expect(record.traces).toHaveLength(7);
    expect(record.traces[0].point_count).toBe(2);
  });

  it('rejects the wrong repeat count', () => {
    expect(() => buildRecord(CFG, 'c', new Date(), ATTRS, sevenTraces().slice(0, 6))).toThrow(
      'need 7 traces',
    );
  });

  it('rejects traces of the wrong length', () => {
    const traces = sevenTraces();
    traces[3] = [1, 2, 3];
    expect(() => buildRecord(CFG, 'c', new Date(), ATTRS, traces)).toThrow('expected 4');
  });

  it('onscreen length check uses points times iterations', () => {
    const cfg: ProbeConfig = {
      ...CFG,
      method: 'onscreen',
      subsetMode: false,
      pointCount: 16,
      iterationsPerPoint: 11,
    };
    const record = buildRecord(cfg, 'c', new Date(), ATTRS, sevenTraces(176));
    expect(record.traces[0].timings).toHaveLength(176);
  });
});
