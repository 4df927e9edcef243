export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const CLIENT_KEY = 'euprobe:client-id';

function randomId(): string {
  return crypto.randomUUID();
}

/**
 * Stable random client id, minted once per browser profile and reused on
 * every later visit. Private windows where storage throws just get a
 * fresh id each run.
 */
export function clientId(storage?: StorageLike, mint: () => string = randomId): string {
  let store = storage;
  if (!store) {
    try {
      store = localStorage;
    } catch {
      return mint();
    }
  }
  try {
    const existing = store.getItem(CLIENT_KEY);
    if (existing) return existing;
    const fresh = mint();
    store.setItem(CLIENT_KEY, fresh);
    return fresh;
  } catch {
    return mint();
  }
}
