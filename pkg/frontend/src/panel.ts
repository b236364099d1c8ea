/** Stats panel rendering. Values arrive as parsed service JSON and are
 * displayed via String() only: no rounding, no client-side arithmetic, so
 * every figure on screen is byte-traceable to a service response. */

import { RegionStats } from './api.js';

export function renderStatsPanel(el: HTMLElement, stats: RegionStats | null, error?: string): void {
  el.replaceChildren();
  if (error !== undefined) {
    const div = document.createElement('div');
    div.className = 'panel-error';
    div.textContent = error;
    el.appendChild(div);
    return;
  }
  if (stats === null) {
    const div = document.createElement('div');
    div.className = 'panel-hint';
    div.textContent = 'Drag a rectangle to see region statistics.';
    el.appendChild(div);
    return;
  }
  const count = document.createElement('div');
  count.className = 'panel-count';
  count.textContent = `${String(stats.count)} samples`;
  el.appendChild(count);

  const rows: Array<[string, number | null]> = [
    ['avg duration (voiced frames)', stats.avg_duration_frames],
    ['avg pitch range (semitones)', stats.avg_pitch_range_st],
  ];
  for (const [label, value] of rows) {
    const row = document.createElement('div');
    row.className = 'panel-row';
    const name = document.createElement('span');
    name.className = 'panel-label';
    name.textContent = label;
    const val = document.createElement('span');
    val.className = 'panel-value';
    val.textContent = value === null ? 'n/a' : String(value);
    row.append(name, val);
    el.appendChild(row);
  }
}
