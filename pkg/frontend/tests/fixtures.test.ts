import { describe, it, expect } from 'vitest';
import { readFileSync } from 'node:fs';
import { fileURLToPath } from 'node:url';
import { join, dirname } from 'node:path';
import { generateFixtures } from '../scripts/fixturegen.js';

const FIXTURE_DIR = join(dirname(fileURLToPath(import.meta.url)), '..', 'fixtures');

describe('recorded fixtures', () => {
  it('match a fresh deterministic generation byte for byte', async () => {
    const files = await generateFixtures();
    expect(files.length).toBeGreaterThanOrEqual(4);
    for (const file of files) {
      const committed = readFileSync(join(FIXTURE_DIR, file.name), 'utf8');
      expect(committed, file.name).toBe(file.content);
    }
  });

  it('cover all three collection methods', async () => {
    const files = await generateFixtures();
    const methods = new Set<string>();
    for (const file of files) {
      if (!file.name.endsWith('.ndjson')) continue;
      for (const line of file.content.trim().split('\n')) {
        for (const trace of JSON.parse(line).traces) methods.add(trace.method);
      }
    }
    expect([...methods].sort()).toEqual(['gpu', 'offscreen', 'onscreen']);
  });
});
