// Deterministic fixture synthesis. A scripted machine stands in for the
// browser: the real collectors, attribute builder and record assembly all
// run unmodified, only the clock, the frame scheduler and the GPU are
// simulated. Reruns are byte-identical, so the recorded files double as a
// drift alarm for the wire format.

import { parseQuery } from '../src/config.js';
import { applyBrowserQuirks } from '../src/fallback.js';
import { collectOnscreen } from '../src/onscreen.js';
import { runSubsetSweep } from '../src/sweep.js';
import type { SubsetHarness } from '../src/sweep.js';
import { collectGpuTimer } from '../src/gputimer.js';
import type { TimerGl } from '../src/gputimer.js';
import { buildAttributes } from '../src/attributes.js';
import type { AttributeSources } from '../src/attributes.js';
import { buildRecord } from '../src/record.js';
import { TRACES_PER_RECORD } from '../src/types.js';
import type { ProbeConfig } from '../src/types.js';

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function normal(rng: () => number): number {
  const u = Math.max(rng(), 1e-12);
  return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * rng());
}

function round3(x: number): number {
  return Math.round(x * 1000) / 1000;
}

const REFRESH_MS = 16.666;
const COST_PER_OP = 0.0085; // ms per stall-loop iteration at speed 1.0

/** Per-EU speed spread; points land on units round-robin. */
class SimDevice {
  readonly speeds: number[];

  constructor(seed: number, euCount = 8) {
    const rng = mulberry32(seed);
    this.speeds = Array.from({ length: euCount }, () => 1 + (rng() - 0.5) * 0.35);
  }

  private stallMs(point: number, loopLength: number): number {
    return loopLength * COST_PER_OP * this.speeds[point % this.speeds.length];
  }

  /** Wall time for one frame's draw with a single stalled point (or none). */
  onscreenDrawMs(stall: number, cfg: ProbeConfig, rng: () => number): number {
    const base = 2.0 + rng() * 0.3;
    if (stall < 0) return base;
    return base + this.stallMs(stall, cfg.stallLoopLength) + (rng() - 0.5) * 0.6;
  }

  /** Stalled points run in parallel across units, serialized within one. */
  contentionMs(mask: number, cfg: ProbeConfig): number {
    const perUnit = new Array(this.speeds.length).fill(0);
    for (let p = 0; p < cfg.pointCount; p++) {
      if ((mask >> p) & 1) perUnit[p % this.speeds.length] += this.stallMs(p, cfg.stallLoopLength);
    }
    return Math.max(0, ...perUnit);
  }

  subsetMs(mask: number, cfg: ProbeConfig, rng: () => number): number {
    return 2.2 + this.contentionMs(mask, cfg) + Math.abs(normal(rng)) * 0.15;
  }

  gpuNs(mask: number, cfg: ProbeConfig, rng: () => number): number {
    const ms = 0.4 + this.contentionMs(mask, cfg) + Math.abs(normal(rng)) * 0.03;
    return Math.round(ms * 1e6);
  }
}

/** Frame-locked screen: a draw that overruns its budget skips vsyncs. */
class SimScreen {
  private now: number;
  private pendingMs = 0;

  constructor(
    private device: SimDevice,
    private cfg: ProbeConfig,
    private rng: () => number,
  ) {
    this.now = 1000 + this.rng() * 10;
  }

  draw = (stall: number): void => {
    this.pendingMs = this.device.onscreenDrawMs(stall, this.cfg, this.rng);
  };

  requestFrame = (cb: (ts: number) => void): void => {
    const frames = Math.max(1, Math.ceil(this.pendingMs / REFRESH_MS));
    this.now += frames * REFRESH_MS + (this.rng() - 0.5) * 0.5;
    this.pendingMs = 0;
    cb(round3(this.now));
  };
}

class SimWorkerHarness implements SubsetHarness {
  private clock: number;
  private pendingMs = 0;

  constructor(
    private device: SimDevice,
    private cfg: ProbeConfig,
    private rng: () => number,
  ) {
    this.clock = 500 + this.rng() * 5;
  }

  draw(mask: number): void {
    this.pendingMs = this.device.subsetMs(mask, this.cfg, this.rng);
  }

  async fence(): Promise<void> {
    this.clock += this.pendingMs;
    this.pendingMs = 0;
  }

  now(): number {
    return round3(this.clock);
  }
}

const EXT = { TIME_ELAPSED_EXT: 0x88bf, GPU_DISJOINT_EXT: 0x8fbb };

class SimTimerGl implements TimerGl {
  readonly QUERY_RESULT = 0x8866;
  readonly QUERY_RESULT_AVAILABLE = 0x8867;
  private results = new Map<object, number>();
  private active: object | null = null;
  private maskDrawn = 0;

  constructor(
    private device: SimDevice,
    private cfg: ProbeConfig,
    private rng: () => number,
  ) {}

  noteDraw(mask: number): void {
    this.maskDrawn = mask;
  }

  getExtension(name: string): unknown {
    return name === 'EXT_disjoint_timer_query_webgl2' ? EXT : null;
  }

  createQuery(): object {
    return {};
  }

  deleteQuery(query: object | null): void {
    if (query) this.results.delete(query);
  }

  beginQuery(_target: number, query: object): void {
    this.active = query;
  }

  endQuery(_target: number): void {
    if (this.active) {
      this.results.set(this.active, this.device.gpuNs(this.maskDrawn, this.cfg, this.rng));
      this.active = null;
    }
  }

  getQueryParameter(query: object, pname: number): unknown {
    if (pname === this.QUERY_RESULT_AVAILABLE) return this.results.has(query);
    return this.results.get(query);
  }

  getParameter(_pname: number): unknown {
    return false; // never disjoint in simulation
  }

  flush(): void {}
}

interface SimClient {
  clientId: string;
  collectedAt: Date;
  query: string;
  userAgent: string;
  deviceSeed: number;
  noiseSeed: number;
  sources: AttributeSources;
}

const CHROME_LINUX: AttributeSources = {
  userAgent:
    'Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/124.0.0.0 Safari/537.36',
  languages: ['en-US', 'en'],
  platform: 'Linux x86_64',
  pluginNames: ['PDF Viewer', 'Chrome PDF Viewer', 'Chromium PDF Viewer'],
  cookieEnabled: true,
  doNotTrack: null,
  screenWidth: 1920,
  screenHeight: 1080,
  timeZone: 'Europe/Berlin',
  sessionStorageWorks: true,
  webglVendor: 'Google Inc. (NVIDIA)',
  webglRenderer: 'ANGLE (NVIDIA, NVIDIA GeForce GTX 1660 Direct3D11 vs_5_0 ps_5_0)',
};

const FIREFOX_WINDOWS: AttributeSources = {
  userAgent: 'Mozilla/5.0 (Windows NT 10.0; Win64; x64; rv:125.0) Gecko/20100101 Firefox/125.0',
  languages: ['de-DE', 'de', 'en'],
  platform: 'Win32',
  pluginNames: [],
  cookieEnabled: true,
  doNotTrack: '1',
  screenWidth: 2560,
  screenHeight: 1440,
  timeZone: 'Europe/Vienna',
  sessionStorageWorks: true,
  webglVendor: 'Google Inc. (AMD)',
  webglRenderer: 'ANGLE (AMD, AMD Radeon RX 6600 Direct3D11 vs_5_0 ps_5_0)',
};

function clientConfig(client: SimClient): ProbeConfig {
  return applyBrowserQuirks(parseQuery(client.query), client.userAgent);
}

async function onscreenTraces(
  client: SimClient,
): Promise<{ cfg: ProbeConfig; traces: number[][]; refresh: number[] }> {
  const cfg = clientConfig(client);
  const device = new SimDevice(client.deviceSeed);
  const rng = mulberry32(client.noiseSeed);
  const traces: number[][] = [];
  const refresh: number[] = [];
  for (let rep = 0; rep < TRACES_PER_RECORD; rep++) {
    const screen = new SimScreen(device, cfg, rng);
    const result = await collectOnscreen(cfg, {
      requestFrame: screen.requestFrame,
      draw: screen.draw,
    });
    traces.push(result.timings);
    refresh.push(result.refreshPeriodMs);
  }
  return { cfg, traces, refresh };
}

async function subsetTraces(client: SimClient): Promise<{ cfg: ProbeConfig; traces: number[][] }> {
  const cfg = clientConfig(client);
  const device = new SimDevice(client.deviceSeed);
  const rng = mulberry32(client.noiseSeed);
  const traces: number[][] = [];
  for (let rep = 0; rep < TRACES_PER_RECORD; rep++) {
    if (cfg.method === 'gpu') {
      const gl = new SimTimerGl(device, cfg, rng);
      traces.push(await collectGpuTimer(cfg, gl, (mask) => gl.noteDraw(mask)));
    } else {
      traces.push(await runSubsetSweep(cfg, new SimWorkerHarness(device, cfg, rng)));
    }
  }
  return { cfg, traces };
}

function toLine(client: SimClient, cfg: ProbeConfig, traces: number[][]): string {
  const attributes = buildAttributes(client.sources);
  return JSON.stringify(buildRecord(cfg, client.clientId, client.collectedAt, attributes, traces));
}

export interface FixtureFile {
  name: string;
  content: string;
}

export async function generateFixtures(): Promise<FixtureFile[]> {
  const onscreenClient: SimClient = {
    clientId: '6e9c1b64-70f2-4f3e-9d25-3a81c4f0b9aa',
    collectedAt: new Date(Date.UTC(2025, 2, 1, 12, 0, 0)),
    query: '?method=onscreen&operator=sin',
    userAgent: CHROME_LINUX.userAgent,
    deviceSeed: 21,
    noiseSeed: 22,
    sources: CHROME_LINUX,
  };
  const offscreenChrome: SimClient = {
    clientId: '0b7ddca1-4f11-4c2f-a9c6-55e20f6ab315',
    collectedAt: new Date(Date.UTC(2025, 2, 1, 13, 0, 0)),
    query: '?method=offscreen&operator=sinh',
    userAgent: CHROME_LINUX.userAgent,
    deviceSeed: 11,
    noiseSeed: 12,
    sources: CHROME_LINUX,
  };
  const offscreenFirefox: SimClient = {
    clientId: 'f3d1c2aa-8e04-4b7c-b2d0-91cf6f50e874',
    collectedAt: new Date(Date.UTC(2025, 2, 1, 13, 30, 0)),
    query: '?method=offscreen&operator=sinh',
    userAgent: FIREFOX_WINDOWS.userAgent,
    deviceSeed: 13,
    noiseSeed: 14,
    sources: FIREFOX_WINDOWS,
  };
  const gpuClient: SimClient = {
    clientId: '9a2f4e11-6c3b-4d88-8b70-2f4f7f0cc2de',
    collectedAt: new Date(Date.UTC(2025, 2, 1, 14, 0, 0)),
    query: '?method=gpu&operator=mul',
    userAgent: CHROME_LINUX.userAgent,
    deviceSeed: 31,
    noiseSeed: 32,
    sources: CHROME_LINUX,
  };

  const onscreen = await onscreenTraces(onscreenClient);
  const offChrome = await subsetTraces(offscreenChrome);
  const offFirefox = await subsetTraces(offscreenFirefox);
  const gpu = await subsetTraces(gpuClient);

  return [
    {
      name: 'onscreen-16x11.ndjson',
      content: toLine(onscreenClient, onscreen.cfg, onscreen.traces) + '\n',
    },
    {
      name: 'onscreen-16x11.meta.json',
      content: JSON.stringify({ refresh_period_ms: onscreen.refresh }, null, 2) + '\n',
    },
    {
      name: 'offscreen-10pt.ndjson',
      content:
        toLine(offscreenChrome, offChrome.cfg, offChrome.traces) +
        '\n' +
        toLine(offscreenFirefox, offFirefox.cfg, offFirefox.traces) +
        '\n',
    },
    {
      name: 'gpu-10pt.ndjson',
      content: toLine(gpuClient, gpu.cfg, gpu.traces) + '\n',
    },
  ];
}
