import { getGl, createDrawTarget } from './gl.js';
import { runSubsetSweep } from './sweep.js';
import { collectGpuTimer } from './gputimer.js';
import { OffscreenUnsupported } from './types.js';
import type { ProbeConfig } from './types.js';

interface CollectMessage {
  kind: 'collect';
  cfg: ProbeConfig;
}

function post(msg: unknown): void {
  (self as unknown as Worker).postMessage(msg);
}

async function handleCollect(cfg: ProbeConfig): Promise<number[]> {
  if (typeof OffscreenCanvas === 'undefined') {
    throw new OffscreenUnsupported('OffscreenCanvas missing in worker');
  }
  const canvas = new OffscreenCanvas(8, 8);
  const gl = getGl(canvas);
  const target = createDrawTarget(gl, cfg);
  const progress = (done: number, total: number) => {
    if (cfg.showProgress && done % 64 === 0) post({ kind: 'progress', done, total });
  };
  try {
    if (cfg.method === 'gpu') {
      return await collectGpuTimer(cfg, gl, (mask) => target.draw(mask));
    }
    if (typeof canvas.convertToBlob !== 'function') {
      throw new OffscreenUnsupported('convertToBlob missing in worker');
    }
    return await runSubsetSweep(
      cfg,
      {
        draw: (mask) => target.draw(mask),
        // blob encoding cannot start until the queued draw finishes,
        // so awaiting it is the pipeline fence
        fence: () => canvas.convertToBlob(),
        now: () => performance.now(),
      },
      progress,
    );
  } finally {
    target.dispose();
  }
}

self.onmessage = async (ev: MessageEvent<CollectMessage>) => {
  if (!ev.data || ev.data.kind !== 'collect') return;
  try {
    const timings = await handleCollect(ev.data.cfg);
    post({ kind: 'done', timings });
  } catch (err) {
    const e = err as Error;
    post({ kind: 'error', name: e.name || 'Error', message: e.message || String(err) });
  }
};
