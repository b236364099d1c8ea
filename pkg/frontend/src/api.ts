/** Typed client for the read-only explorer service. The UI never aggregates
 * numbers itself: every statistic it shows comes back from these endpoints. */

export type Axis = 'energy' | 'polarity' | 'surprisal';

export const AXES: Axis[] = ['energy', 'polarity', 'surprisal'];

export interface PointCoords {
  energy: number;
  polarity: number;
  surprisal: number;
}

export interface BundlePoint {
  id: string;
  lexeme: string;
  coords: PointCoords;
  duration_frames: number;
  pitch_range_st: number;
  audio_ref?: string;
}

export interface Bundle {
  format: string;
  axes: { names: string[]; model_hash?: string; probe_source?: string };
  points: BundlePoint[];
}

export interface RegionStats {
  count: number;
  avg_duration_frames: number | null;
  avg_pitch_range_st: number | null;
}

export interface Rect {
  xmin: number;
  xmax: number;
  ymin: number;
  ymax: number;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function getJson<T>(url: string): Promise<T> {
  const resp = await fetch(url);
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      /* non-JSON error body; keep the status text */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(private readonly baseUrl: string = '') {}

  points(): Promise<Bundle> {
    return getJson<Bundle>(`${this.baseUrl}/api/points`);
  }

  regionStatsUrl(xdim: Axis, ydim: Axis, rect: Rect, lexemes: string[] = []): string {
    const params = new URLSearchParams({
      xdim,
      ydim,
      xmin: String(rect.xmin),
      xmax: String(rect.xmax),
      ymin: String(rect.ymin),
      ymax: String(rect.ymax),
    });
    for (const lexeme of lexemes) params.append('lexeme', lexeme);
    return `${this.baseUrl}/api/region-stats?${params.toString()}`;
  }

  regionStats(xdim: Axis, ydim: Axis, rect: Rect, lexemes: string[] = []): Promise<RegionStats> {
    return getJson<RegionStats>(this.regionStatsUrl(xdim, ydim, rect, lexemes));
  }

  audioUrl(pointId: string): string {
    return `${this.baseUrl}/api/audio/${encodeURIComponent(pointId)}`;
  }
}
