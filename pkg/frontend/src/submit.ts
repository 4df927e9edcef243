import type { RecordJson } from './types.js';
import type { StorageLike } from './client.js';

const QUEUE_KEY = 'euprobe:queue';
const QUEUE_CAP = 32;

export interface SubmitDeps {
  fetchFn?: typeof fetch;
  sleep?: (ms: number) => Promise<void>;
  storage?: StorageLike | null;
  mintId?: () => string;
  maxAttempts?: number;
  baseDelayMs?: number;
}

export interface SubmitResult {
  ok: boolean;
  queued: boolean;
}

interface QueuedItem {
  id: string;
  body: string;
}

type Outcome = 'accepted' | 'rejected' | 'transient';

function defaultSleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function pickStorage(deps: SubmitDeps): StorageLike | null {
  if (deps.storage !== undefined) return deps.storage;
  try {
    return localStorage;
  } catch {
    return null;
  }
}

function readQueue(storage: StorageLike | null): QueuedItem[] {
  if (!storage) return [];
  try {
    const raw = storage.getItem(QUEUE_KEY);
    if (!raw) return [];
    const parsed = JSON.parse(raw);
    return Array.isArray(parsed) ? parsed : [];
  } catch {
    return [];
  }
}

function writeQueue(storage: StorageLike | null, items: QueuedItem[]): void {
  if (!storage) return;
  try {
    storage.setItem(QUEUE_KEY, JSON.stringify(items.slice(-QUEUE_CAP)));
  } catch {
    // storage full or blocked; the submission is simply lost
  }
}

async function postOnce(
  endpoint: string,
  body: string,
  submissionId: string,
  fetchFn: typeof fetch,
): Promise<Outcome> {
  try {
    const res = await fetchFn(endpoint, {
      method: 'POST',
      headers: {
        'Content-Type': 'application/json',
        'X-Submission-Id': submissionId,
      },
      body,
    });
    if (res.ok) return 'accepted';
    if (res.status === 429 || res.status >= 500) return 'transient';
    return 'rejected'; // schema or size problem, retrying cannot fix it
  } catch {
    return 'transient';
  }
}

/**
 * Ship one record. Transient failures (network, 5xx) back off
 * exponentially for a few attempts; if the service stays unreachable the
 * record parks in local storage under its submission id, so the next
 * page load can replay it and the server's dedupe keeps it single.
 */
export async function submitRecord(
  record: RecordJson,
  endpoint: string,
  deps: SubmitDeps = {},
): Promise<SubmitResult> {
  const fetchFn = deps.fetchFn ?? fetch;
  const sleep = deps.sleep ?? defaultSleep;
  const maxAttempts = deps.maxAttempts ?? 5;
  const baseDelay = deps.baseDelayMs ?? 500;
  const id = (deps.mintId ?? (() => crypto.randomUUID()))();
  const body = JSON.stringify(record);

  for (let attempt = 0; attempt < maxAttempts; attempt++) {
    const outcome = await postOnce(endpoint, body, id, fetchFn);
    if (outcome === 'accepted') return { ok: true, queued: false };
    if (outcome === 'rejected') return { ok: false, queued: false };
    if (attempt + 1 < maxAttempts) await sleep(baseDelay * 2 ** attempt);
  }

  const storage = pickStorage(deps);
  writeQueue(storage, [...readQueue(storage), { id, body }]);
  return { ok: false, queued: true };
}

/**
 * Replay anything parked by an earlier run. One attempt per item; still
 * unreachable means it stays parked, a hard reject means it is dropped.
 * Returns how many records went through.
 */
export async function flushQueue(endpoint: string, deps: SubmitDeps = {}): Promise<number> {
  const fetchFn = deps.fetchFn ?? fetch;
  const storage = pickStorage(deps);
  const items = readQueue(storage);
  if (!items.length) return 0;

  const keep: QueuedItem[] = [];
  let sent = 0;
  for (const item of items) {
    const outcome = await postOnce(endpoint, item.body, item.id, fetchFn);
    if (outcome === 'accepted') sent++;
    else if (outcome === 'transient') keep.push(item);
  }
  writeQueue(storage, keep);
  return sent;
}
