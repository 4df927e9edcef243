import { OffscreenUnsupported, WebGLUnavailable, ContextLost, ExtensionUnavailable } from './types.js';
import type { ProbeConfig } from './types.js';

type WorkerMessage =
  | { kind: 'done'; timings: number[] }
  | { kind: 'error'; name: string; message: string }
  | { kind: 'progress'; done: number; total: number };

function rebuildError(name: string, message: string): Error {
  switch (name) {
    case 'OffscreenUnsupported':
      return new OffscreenUnsupported(message);
    case 'WebGLUnavailable':
      return new WebGLUnavailable(message);
    case 'ContextLost':
      return new ContextLost(message);
    case 'ExtensionUnavailable':
      return new ExtensionUnavailable(message);
    default:
      return new Error(name + ': ' + message);
  }
}

function spawnWorker(): Worker {
  return new Worker(new URL('./worker.js', import.meta.url), { type: 'module' });
}

/**
 * Run the subset sweep off the main thread. The worker owns its own
 * OffscreenCanvas, so nothing here blocks on vsync. cfg.method picks the
 * clock inside the worker: blob-fenced wall time, or the GPU's own
 * timer extension.
 */
export function collectOffscreen(
  cfg: ProbeConfig,
  makeWorker: () => Worker = spawnWorker,
  onProgress?: (done: number, total: number) => void,
): Promise<number[]> {
  if (typeof OffscreenCanvas === 'undefined' || typeof Worker === 'undefined') {
    return Promise.reject(new OffscreenUnsupported('OffscreenCanvas or Worker missing'));
  }
  return new Promise((resolve, reject) => {
    const worker = makeWorker();
    const finish = (fn: () => void) => {
      worker.terminate();
      fn();
    };
    worker.onmessage = (ev: MessageEvent<WorkerMessage>) => {
      const msg = ev.data;
      if (!msg) return;
      if (msg.kind === 'done') finish(() => resolve(msg.timings));
      else if (msg.kind === 'error') finish(() => reject(rebuildError(msg.name, msg.message)));
      else if (msg.kind === 'progress' && onProgress) onProgress(msg.done, msg.total);
    };
    worker.onerror = (ev) => {
      finish(() => reject(new OffscreenUnsupported('worker failed: ' + (ev.message || 'unknown'))));
    };
    worker.postMessage({ kind: 'collect', cfg });
  });
}
