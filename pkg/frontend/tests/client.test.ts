import { describe, it, expect } from 'vitest';
import { clientId } from '../src/client.js';
import type { StorageLike } from '../src/client.js';

function memoryStorage(): StorageLike & { data: Map<string, string> } {
  const data = new Map<string, string>();
  return {
    data,
    getItem: (k) => data.get(k) ?? null,
    setItem: (k, v) => {
      data.set(k, v);
    },
  };
}

describe('clientId', () => {
  it('mints once and persists', () => {
    const storage = memoryStorage();
    let n = 0;
    const mint = () => `id-${++n}`;
    expect(clientId(storage, mint)).toBe('id-1');
    expect(clientId(storage, mint)).toBe('id-1');
    expect(n).toBe(1);
  });

  it('returns a previously stored id untouched', () => {
    const storage = memoryStorage();
    storage.setItem('euprobe:client-id', 'veteran');
    expect(clientId(storage, () => 'fresh')).toBe('veteran');
  });

  it('storage failures degrade to a per-run id', () => {
    const broken: StorageLike = {
      getItem: () => {
        throw new Error('blocked');
      },
      setItem: () => {
        throw new Error('blocked');
      },
    };
    let n = 0;
    const mint = () => `run-${++n}`;
    expect(clientId(broken, mint)).toBe('run-1');
    expect(clientId(broken, mint)).toBe('run-2');
  });

  it('default mint produces uuid-shaped ids', () => {
    const storage = memoryStorage();
    const id = clientId(storage);
    expect(id).toMatch(/^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$/);
  });
});
