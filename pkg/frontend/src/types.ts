// Wire types for the ingest service. Field names and nesting mirror the
// NDJSON record schema exactly; anything extra is rejected server-side.

export type Method = 'onscreen' | 'offscreen' | 'gpu';

export type Operator =
  | 'sin' | 'mul' | 'sinh' | 'exp2' | 'pow'
  | 'atanh' | 'acosh' | 'sqrt' | 'fract' | 'log2' | 'tanh';

export interface TraceJson {
  method: Method;
  operator: Operator;
  point_count: number;
  iterations_per_point: number;
  subset_mode: boolean;
  stall_loop_length: number;
  timings: number[];
}

export type AttributeMap = Record<string, string | number | boolean>;

export interface RecordJson {
  client_id: string;
  collected_at: string;
  attributes: AttributeMap;
  traces: TraceJson[];
  true_device: string | null;
}

export interface ProbeConfig {
  method: Method;
  operator: Operator;
  pointCount: number;
  iterationsPerPoint: number;
  subsetMode: boolean;
  stallLoopLength: number;
  endpoint: string;
  repeatCount: number;
  showProgress: boolean;
}

export const TRACES_PER_RECORD = 7;

// name is pinned so errors can be rebuilt after a worker postMessage hop
export class WebGLUnavailable extends Error {
  name = 'WebGLUnavailable';
}
export class ContextLost extends Error {
  name = 'ContextLost';
}
export class OffscreenUnsupported extends Error {
  name = 'OffscreenUnsupported';
}
export class ExtensionUnavailable extends Error {
  name = 'ExtensionUnavailable';
}

export function expectedTraceLength(cfg: ProbeConfig): number {
  return cfg.subsetMode
    ? 2 ** cfg.pointCount
    : cfg.pointCount * cfg.iterationsPerPoint;
}
