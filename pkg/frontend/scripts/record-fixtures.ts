import { mkdirSync, writeFileSync } from 'node:fs';
import { fileURLToPath } from 'node:url';
import { join, dirname } from 'node:path';
import { generateFixtures } from './fixturegen.js';

async function main(): Promise<void> {
  const here = dirname(fileURLToPath(import.meta.url));
  const outDir = join(here, '..', '..', 'fixtures');
  mkdirSync(outDir, { recursive: true });
  for (const file of await generateFixtures()) {
    const path = join(outDir, file.name);
    writeFileSync(path, file.content);
    console.log(`wrote ${path} (${file.content.length} bytes)`);
  }
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
