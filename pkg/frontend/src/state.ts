/** View state: which affective axes are plotted, which lexemes are visible,
 * and the current selection rectangle in data coordinates. Pure logic, no
 * DOM, so invariants are testable headlessly. */

import { Axis, BundlePoint, Rect } from './api.js';

export function normalizeRect(x0: number, x1: number, y0: number, y1: number): Rect {
  return {
    xmin: Math.min(x0, x1),
    xmax: Math.max(x0, x1),
    ymin: Math.min(y0, y1),
    ymax: Math.max(y0, y1),
  };
}

export class ViewState {
  xAxis: Axis = 'surprisal';
  yAxis: Axis = 'polarity';
  /** Empty set means every lexeme is visible. */
  readonly activeLexemes = new Set<string>();
  selection: Rect | null = null;

  setAxes(x: Axis, y: Axis): void {
    if (x === y) {
      throw new Error('x and y axes must differ');
    }
    this.xAxis = x;
    this.yAxis = y;
  }

  /** Swap the two axes, transposing any selection so the selected point set
   * is unchanged (a pure view transform). */
  swapAxes(): void {
    [this.xAxis, this.yAxis] = [this.yAxis, this.xAxis];
    if (this.selection) {
      this.selection = {
        xmin: this.selection.ymin,
        xmax: this.selection.ymax,
        ymin: this.selection.xmin,
        ymax: this.selection.xmax,
      };
    }
  }

  toggleLexeme(lexeme: string): void {
    if (this.activeLexemes.has(lexeme)) {
      this.activeLexemes.delete(lexeme);
    } else {
      this.activeLexemes.add(lexeme);
    }
  }

  isVisible(point: BundlePoint): boolean {
    return this.activeLexemes.size === 0 || this.activeLexemes.has(point.lexeme);
  }

  visiblePoints(points: BundlePoint[]): BundlePoint[] {
    return points.filter((p) => this.isVisible(p));
  }

  inSelection(point: BundlePoint): boolean {
    if (!this.selection) return false;
    const x = point.coords[this.xAxis];
    const y = point.coords[this.yAxis];
    const r = this.selection;
    return r.xmin <= x && x <= r.xmax && r.ymin <= y && y <= r.ymax;
  }

  /** Points that are both visible and inside the selection rectangle. The
   * two predicates are independent, so filtering before or after selecting
   * yields the same set. */
  selectedPoints(points: BundlePoint[]): BundlePoint[] {
    return points.filter((p) => this.isVisible(p) && this.inSelection(p));
  }
}
