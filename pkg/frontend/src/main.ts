import { parseQuery } from './config.js';
import { applyBrowserQuirks, fallbackConfig } from './fallback.js';
import { getGl, createDrawTarget, watchContextLoss } from './gl.js';
import type { DrawTarget } from './gl.js';
import { collectOnscreen } from './onscreen.js';
import { collectOffscreen } from './offscreen.js';
import { buildAttributes, readSources } from './attributes.js';
import { clientId } from './client.js';
import { buildRecord } from './record.js';
import { submitRecord, flushQueue } from './submit.js';
import type { ProbeConfig } from './types.js';

const REPEAT_GAP_MS = 100;

let inFlight = false; // at most one collection per page

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function status(text: string): void {
  const el = document.getElementById('status');
  if (el) el.textContent = text;
}

function makeCanvas(): HTMLCanvasElement {
  const canvas = document.createElement('canvas');
  canvas.width = 1;
  canvas.height = 1;
  canvas.style.position = 'fixed';
  canvas.style.left = '0';
  canvas.style.top = '0';
  canvas.style.opacity = '0';
  canvas.style.pointerEvents = 'none';
  document.body.appendChild(canvas);
  return canvas;
}

interface CollectedSet {
  cfg: ProbeConfig;
  traces: number[][];
}

async function collectAll(
  cfg: ProbeConfig,
  gl: WebGL2RenderingContext,
  contextLost: () => boolean,
): Promise<CollectedSet> {
  let rig: DrawTarget | null = null;
  try {
    if (cfg.method === 'onscreen') rig = createDrawTarget(gl, cfg);
    const traces: number[][] = [];
    for (let rep = 0; rep < cfg.repeatCount; rep++) {
      if (rep > 0) await sleep(REPEAT_GAP_MS);
      status(`trace ${rep + 1}/${cfg.repeatCount} via ${cfg.method}`);
      if (rig) {
        const result = await collectOnscreen(cfg, {
          requestFrame: (cb) => requestAnimationFrame(cb),
          draw: (stall) => rig!.draw(stall),
          lost: () => contextLost() || rig!.lost(),
        });
        traces.push(result.timings);
      } else {
        traces.push(await collectOffscreen(cfg));
      }
    }
    return { cfg, traces };
  } catch (err) {
    // a record must be homogeneous, so any method switch restarts all repeats
    const next = fallbackConfig(cfg, err);
    if (!next) throw err;
    status(`${cfg.method} unavailable, retrying via ${next.method}`);
    return collectAll(next, gl, contextLost);
  } finally {
    if (rig) rig.dispose();
  }
}

export async function run(): Promise<void> {
  if (inFlight) return;
  inFlight = true;
  try {
    const base = applyBrowserQuirks(parseQuery(location.search), navigator.userAgent);
    const flushed = await flushQueue(base.endpoint);
    if (flushed > 0) status(`replayed ${flushed} parked submissions`);

    const canvas = makeCanvas();
    let lostFlag = false;
    watchContextLoss(canvas, () => {
      lostFlag = true;
    });
    const gl = getGl(canvas);
    const attributes = buildAttributes(readSources(gl));

    const { cfg, traces } = await collectAll(base, gl, () => lostFlag);
    const record = buildRecord(cfg, clientId(), new Date(), attributes, traces);
    status('submitting');
    const outcome = await submitRecord(record, cfg.endpoint);
    status(outcome.ok ? 'accepted' : outcome.queued ? 'parked for next visit' : 'rejected');
  } catch (err) {
    status('failed: ' + ((err as Error).message || String(err)));
  } finally {
    inFlight = false;
  }
}

if (typeof document !== 'undefined') {
  if (document.readyState === 'loading') {
    document.addEventListener('DOMContentLoaded', () => {
      void run();
    });
  } else {
    void run();
  }
}
