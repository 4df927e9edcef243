import type { AttributeMap } from './types.js';

// Request headers are invisible to page script, so the two Accept values
// are pinned to what current mainstream browsers send for a top-level
// navigation. Everything else is read live.
const HTTP_ACCEPT =
  'text/html,application/xhtml+xml,application/xml;q=0.9,image/avif,image/webp,*/*;q=0.8';
const HTTP_ACCEPT_ENCODING = 'gzip, deflate, br';

export interface AttributeSources {
  userAgent: string;
  languages: string[];
  platform: string;
  pluginNames: string[];
  cookieEnabled: boolean;
  doNotTrack: string | null;
  screenWidth: number;
  screenHeight: number;
  timeZone: string;
  sessionStorageWorks: boolean;
  webglVendor: string;
  webglRenderer: string;
}

function acceptLanguage(languages: string[]): string {
  if (!languages.length) return 'en-US';
  return languages
    .map((lang, i) => (i === 0 ? lang : `${lang};q=${Math.max(1 - i * 0.1, 0.1).toFixed(1)}`))
    .join(',');
}

/** The fixed attribute envelope every submission carries: 14 scalar fields. */
export function buildAttributes(src: AttributeSources): AttributeMap {
  return {
    cookies_enabled: src.cookieEnabled,
    session_storage_enabled: src.sessionStorageWorks,
    http_accept: HTTP_ACCEPT,
    http_accept_encoding: HTTP_ACCEPT_ENCODING,
    http_accept_language: acceptLanguage(src.languages),
    http_user_agent: src.userAgent,
    navigator_dnt: src.doNotTrack ?? 'unspecified',
    navigator_platform: src.platform,
    navigator_plugins: src.pluginNames.join(','),
    screen_width: Math.trunc(src.screenWidth),
    screen_height: Math.trunc(src.screenHeight),
    timezone: src.timeZone,
    webgl_vendor: src.webglVendor,
    webgl_renderer: src.webglRenderer,
  };
}

function probeSessionStorage(): boolean {
  try {
    const key = '__probe__';
    sessionStorage.setItem(key, '1');
    sessionStorage.removeItem(key);
    return true;
  } catch {
    return false;
  }
}

interface DebugRendererInfo {
  UNMASKED_VENDOR_WEBGL: number;
  UNMASKED_RENDERER_WEBGL: number;
}

export function readGlIdentity(gl: WebGL2RenderingContext): { vendor: string; renderer: string } {
  const dbg = gl.getExtension('WEBGL_debug_renderer_info') as DebugRendererInfo | null;
  const vendor = gl.getParameter(dbg ? dbg.UNMASKED_VENDOR_WEBGL : gl.VENDOR);
  const renderer = gl.getParameter(dbg ? dbg.UNMASKED_RENDERER_WEBGL : gl.RENDERER);
  return { vendor: String(vendor ?? ''), renderer: String(renderer ?? '') };
}

/** Read everything off the live browser. Only called from page context. */
export function readSources(gl: WebGL2RenderingContext): AttributeSources {
  const nav = navigator as Navigator & { doNotTrack?: string | null };
  const identity = readGlIdentity(gl);
  return {
    userAgent: nav.userAgent,
    languages: nav.languages ? [...nav.languages] : [nav.language],
    platform: nav.platform || '',
    pluginNames: Array.from(nav.plugins ?? []).map((p) => p.name),
    cookieEnabled: nav.cookieEnabled,
    doNotTrack: nav.doNotTrack ?? null,
    screenWidth: screen.width,
    screenHeight: screen.height,
    timeZone: Intl.DateTimeFormat().resolvedOptions().timeZone || 'UTC',
    sessionStorageWorks: probeSessionStorage(),
    webglVendor: identity.vendor,
    webglRenderer: identity.renderer,
  };
}
