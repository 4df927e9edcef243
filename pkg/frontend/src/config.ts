import type { Method, Operator, ProbeConfig } from './types.js';

export const METHODS: Method[] = ['onscreen', 'offscreen', 'gpu'];
export const OPERATORS: Operator[] = [
  'sin', 'mul', 'sinh', 'exp2', 'pow',
  'atanh', 'acosh', 'sqrt', 'fract', 'log2', 'tanh',
];

export const DEFAULT_ENDPOINT = '/api/v1/traces';
export const DEFAULT_STALL_LOOP = 1500;

/**
 * Build the probe configuration from the page URL.
 *
 * Recognized parameters: ?method=&operator=&points=&iters=&endpoint=
 * Unknown or malformed values fall back to the defaults for the chosen
 * method: onscreen measures 16 points for 11 frames each, the readback
 * methods time all subsets of 10 points.
 */
export function parseQuery(search: string): ProbeConfig {
  const params = new URLSearchParams(search);

  const methodRaw = params.get('method') ?? 'offscreen';
  const method: Method = (METHODS as string[]).includes(methodRaw)
    ? (methodRaw as Method)
    : 'offscreen';

  const operatorRaw = params.get('operator') ?? 'sinh';
  const operator: Operator = (OPERATORS as string[]).includes(operatorRaw)
    ? (operatorRaw as Operator)
    : 'sinh';

  const subsetMode = method !== 'onscreen';
  const points = positiveInt(params.get('points'), subsetMode ? 10 : 16);
  const iters = positiveInt(params.get('iters'), subsetMode ? 1 : 11);

  return {
    method,
    operator,
    pointCount: points,
    iterationsPerPoint: iters,
    subsetMode,
    stallLoopLength: DEFAULT_STALL_LOOP,
    endpoint: params.get('endpoint') ?? DEFAULT_ENDPOINT,
    repeatCount: 7,
    showProgress: false,
  };
}

function positiveInt(raw: string | null, fallback: number): number {
  if (raw === null) return fallback;
  const n = Number(raw);
  if (!Number.isInteger(n) || n < 1) return fallback;
  return n;
}
