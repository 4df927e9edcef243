import { describe, it, expect } from 'vitest';
import { buildAttributes } from '../src/attributes.js';
import type { AttributeSources } from '../src/attributes.js';

const SOURCES: AttributeSources = {
  userAgent: 'TestBrowser/1.0',
  languages: ['en-US', 'en', 'de'],
  platform: 'Linux x86_64',
  pluginNames: ['PDF Viewer', 'Другой'],
  cookieEnabled: true,
  doNotTrack: null,
  screenWidth: 1920,
  screenHeight: 1080,
  timeZone: 'Europe/Berlin',
  sessionStorageWorks: true,
  webglVendor: 'Vendor Inc.',
  webglRenderer: 'Renderer 3000',
};

const EXPECTED_KEYS = [
  'cookies_enabled',
  'session_storage_enabled',
  'http_accept',
  'http_accept_encoding',
  'http_accept_language',
  'http_user_agent',
  'navigator_dnt',
  'navigator_platform',
  'navigator_plugins',
  'screen_width',
  'screen_height',
  'timezone',
  'webgl_vendor',
  'webgl_renderer',
];

describe('buildAttributes', () => {
  it('emits exactly the fourteen expected keys', () => {
    const attrs = buildAttributes(SOURCES);
    expect(Object.keys(attrs).sort()).toEqual([...EXPECTED_KEYS].sort());
  });

  it('every value is a scalar', () => {
    for (const value of Object.values(buildAttributes(SOURCES))) {
      expect(['string', 'number', 'boolean']).toContain(typeof value);
    }
  });

  it('screen dimensions are integers', () => {
    const attrs = buildAttributes({ ...SOURCES, screenWidth: 1920.8, screenHeight: 1080.2 });
    expect(attrs.screen_width).toBe(1920);
    expect(attrs.screen_height).toBe(1080);
  });

  it('builds a q-weighted accept-language list', () => {
    const attrs = buildAttributes(SOURCES);
    expect(attrs.http_accept_language).toBe('en-US,en;q=0.9,de;q=0.8');
  });

  it('falls back when no language is exposed', () => {
    const attrs = buildAttributes({ ...SOURCES, languages: [] });
    expect(attrs.http_accept_language).toBe('en-US');
  });

  it('maps absent do-not-track to unspecified', () => {
    expect(buildAttributes(SOURCES).navigator_dnt).toBe('unspecified');
    expect(buildAttributes({ ...SOURCES, doNotTrack: '1' }).navigator_dnt).toBe('1');
  });

  it('joins plugin names into one string', () => {
    expect(buildAttributes(SOURCES).navigator_plugins).toBe('PDF Viewer,Другой');
    expect(buildAttributes({ ...SOURCES, pluginNames: [] }).navigator_plugins).toBe('');
  });

  it('carries the GL identity through', () => {
    const attrs = buildAttributes(SOURCES);
    expect(attrs.webgl_vendor).toBe('Vendor Inc.');
    expect(attrs.webgl_renderer).toBe('Renderer 3000');
  });

  it('pins the accept headers to browser-typical values', () => {
    const attrs = buildAttributes(SOURCES);
    expect(String(attrs.http_accept)).toContain('text/html');
    expect(String(attrs.http_accept_encoding)).toContain('gzip');
  });
});
