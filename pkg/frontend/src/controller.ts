/** Glue between view state, the API client, and the stats panel. Stats
 * requests resolve last-write-wins so a stale response can never overwrite a
 * newer selection's numbers. */

import { ApiClient, Rect, RegionStats } from './api.js';
import { renderStatsPanel } from './panel.js';
import { ViewState } from './state.js';

export class ExplorerController {
  private requestToken = 0;
  lastStats: RegionStats | null = null;

  constructor(
    readonly api: ApiClient,
    readonly state: ViewState,
    private readonly panelEl: HTMLElement,
    private readonly onViewChanged: () => void = () => {},
  ) {}

  async selectRegion(rect: Rect): Promise<void> {
    this.state.selection = rect;
    const token = ++this.requestToken;
    try {
      const stats = await this.api.regionStats(
        this.state.xAxis,
        this.state.yAxis,
        rect,
        [...this.state.activeLexemes],
      );
      if (token !== this.requestToken) return;
      this.lastStats = stats;
      renderStatsPanel(this.panelEl, stats);
    } catch (err) {
      if (token !== this.requestToken) return;
      this.lastStats = null;
      renderStatsPanel(this.panelEl, null, String(err));
    }
  }

  clearSelection(): void {
    this.state.selection = null;
    this.lastStats = null;
    this.requestToken++;
    renderStatsPanel(this.panelEl, null);
    this.onViewChanged();
  }

  /** Axis swap is a pure view transform; the selected point set is preserved
   * and the stats are re-fetched for the transposed rectangle. */
  async swapAxes(): Promise<void> {
    this.state.swapAxes();
    this.onViewChanged();
    if (this.state.selection) {
      await this.selectRegion(this.state.selection);
    }
  }

  async toggleLexeme(lexeme: string): Promise<void> {
    this.state.toggleLexeme(lexeme);
    this.onViewChanged();
    if (this.state.selection) {
      await this.selectRegion(this.state.selection);
    }
  }
}
