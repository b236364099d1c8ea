import { afterEach, describe, expect, it, vi } from 'vitest';

import { ApiClient, ApiError } from '../src/api.js';

afterEach(() => {
  vi.unstubAllGlobals();
});

describe('ApiClient', () => {
  it('builds region-stats URLs with axes, bounds, and repeated lexeme params', () => {
    const api = new ApiClient('');
    const url = api.regionStatsUrl(
      'surprisal',
      'polarity',
      { xmin: -0.5, xmax: 1.25, ymin: 0, ymax: 2 },
      ['yeah', 'mm'],
    );
    const params = new URLSearchParams(url.split('?')[1]);
    expect(params.get('xdim')).toBe('surprisal');
    expect(params.get('ydim')).toBe('polarity');
    expect(params.get('xmin')).toBe('-0.5');
    expect(params.get('xmax')).toBe('1.25');
    expect(params.getAll('lexeme')).toEqual(['yeah', 'mm']);
  });

  it('returns the parsed response body untouched', async () => {
    const payload = { count: 3, avg_duration_frames: 12.5, avg_pitch_range_st: 0.75 };
    const fetchMock = vi.fn(async () => new Response(JSON.stringify(payload)));
    vi.stubGlobal('fetch', fetchMock);
    const api = new ApiClient('http://svc');
    const stats = await api.regionStats('energy', 'polarity', {
      xmin: 0, xmax: 1, ymin: 0, ymax: 1,
    });
    expect(stats).toEqual(payload);
    expect(fetchMock).toHaveBeenCalledOnce();
  });

  it('throws ApiError with the service detail on HTTP errors', async () => {
    vi.stubGlobal(
      'fetch',
      vi.fn(async () => new Response(JSON.stringify({ error: 'malformed rectangle' }), { status: 400 })),
    );
    const api = new ApiClient('');
    await expect(
      api.regionStats('energy', 'polarity', { xmin: 1, xmax: 0, ymin: 0, ymax: 1 }),
    ).rejects.toThrowError(ApiError);
  });

  it('encodes audio URLs per point id', () => {
    const api = new ApiClient('http://svc');
    expect(api.audioUrl('synth:00001')).toBe('http://svc/api/audio/synth%3A00001');
  });
});
