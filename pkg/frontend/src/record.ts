import type { AttributeMap, ProbeConfig, RecordJson, TraceJson } from './types.js';
import { TRACES_PER_RECORD, expectedTraceLength } from './types.js';

/**
 * UTC ISO-8601 with a trailing Z, fractional seconds only when non-zero.
 * Matches the server's own formatter so round trips stay byte-identical.
 */
export function formatTimestamp(date: Date): string {
  const iso = date.toISOString(); // always ...ss.mmmZ
  return iso.endsWith('.000Z') ? iso.slice(0, -5) + 'Z' : iso;
}

export function traceJson(cfg: ProbeConfig, timings: number[]): TraceJson {
  return {
    method: cfg.method,
    operator: cfg.operator,
    point_count: cfg.pointCount,
    iterations_per_point: cfg.iterationsPerPoint,
    subset_mode: cfg.subsetMode,
    stall_loop_length: cfg.stallLoopLength,
    timings: [...timings],
  };
}

/**
 * Assemble one submission: the full repeat set plus the attribute
 * envelope. Length problems are caught here, before anything goes on
 * the wire, because the service rejects short or oversized traces.
 */
export function buildRecord(
  cfg: ProbeConfig,
  clientId: string,
  collectedAt: Date,
  attributes: AttributeMap,
  traceTimings: number[][],
): RecordJson {
  if (traceTimings.length !== TRACES_PER_RECORD) {
    throw new Error(`need ${TRACES_PER_RECORD} traces, got ${traceTimings.length}`);
  }
  const want = expectedTraceLength(cfg);
  traceTimings.forEach((timings, i) => {
    if (timings.length !== want) {
      throw new Error(`trace ${i} has ${timings.length} timings, expected ${want}`);
    }
  });
  return {
    client_id: clientId,
    collected_at: formatTimestamp(collectedAt),
    attributes,
    traces: traceTimings.map((t) => traceJson(cfg, t)),
    true_device: null,
  };
}
