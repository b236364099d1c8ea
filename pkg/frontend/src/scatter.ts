/** SVG scatterplot: one mark per visible point, colored by lexeme, with a
 * drag rectangle reported back in data coordinates. */

import { BundlePoint, Rect } from './api.js';
import { ViewState, normalizeRect } from './state.js';

const WIDTH = 640;
const HEIGHT = 520;
const MARGIN = { top: 16, right: 16, bottom: 42, left: 52 };

const PALETTE = [
  '#4e79a7', '#f28e2b', '#e15759', '#76b7b2', '#59a14f', '#edc948',
  '#b07aa1', '#ff9da7', '#9c755f', '#bab0ac', '#1f77b4', '#d62728',
  '#2ca02c', '#9467bd', '#8c564b', '#e377c2', '#7f7f7f', '#17becf',
];

export function lexemeColor(lexeme: string, order: string[]): string {
  const idx = order.indexOf(lexeme);
  return PALETTE[(idx >= 0 ? idx : 0) % PALETTE.length];
}

interface Scale {
  (value: number): number;
  invert(pixel: number): number;
}

function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const scale = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale;
  scale.invert = (px: number) => d0 + ((px - r0) / (r1 - r0 || 1)) * span;
  return scale;
}

function extent(values: number[]): [number, number] {
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const pad = (hi - lo || 1) * 0.06;
  return [lo - pad, hi + pad];
}

const SVG_NS = 'http://www.w3.org/2000/svg';

function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | number>,
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) el.setAttribute(k, String(v));
  return el;
}

export class ScatterPlot {
  private svg: SVGSVGElement;
  private xScale: Scale = linearScale([0, 1], [0, 1]);
  private yScale: Scale = linearScale([0, 1], [0, 1]);

  constructor(
    private readonly host: HTMLElement,
    private readonly onSelect: (rect: Rect) => void,
    private readonly onPointClick: (point: BundlePoint) => void = () => {},
  ) {
    this.svg = svgEl('svg', {
      viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
      width: '100%',
      class: 'scatter',
    });
    host.replaceChildren(this.svg);
    this.wireDrag();
  }

  render(points: BundlePoint[], view: ViewState): void {
    const visible = view.visiblePoints(points);
    this.svg.replaceChildren();
    if (visible.length === 0) {
      const msg = svgEl('text', {
        x: WIDTH / 2, y: HEIGHT / 2, 'text-anchor': 'middle', class: 'empty-state',
      });
      msg.textContent = 'No points to display';
      this.svg.appendChild(msg);
      return;
    }
    const xs = visible.map((p) => p.coords[view.xAxis]);
    const ys = visible.map((p) => p.coords[view.yAxis]);
    this.xScale = linearScale(extent(xs), [MARGIN.left, WIDTH - MARGIN.right]);
    this.yScale = linearScale(extent(ys), [HEIGHT - MARGIN.bottom, MARGIN.top]);

    this.drawAxes(view);
    const order = [...new Set(visible.map((p) => p.lexeme))].sort();
    for (const p of visible) {
      const dot = svgEl('circle', {
        cx: this.xScale(p.coords[view.xAxis]),
        cy: this.yScale(p.coords[view.yAxis]),
        r: 4,
        fill: lexemeColor(p.lexeme, order),
        'fill-opacity': 0.75,
        class: 'point',
        'data-id': p.id,
      });
      dot.addEventListener('click', (e) => {
        e.stopPropagation();
        this.onPointClick(p);
      });
      const title = svgEl('title', {});
      title.textContent = `${p.lexeme} (${p.id})`;
      dot.appendChild(title);
      this.svg.appendChild(dot);
    }
    this.drawLegend(order);
    if (view.selection) this.drawSelection(view.selection);
  }

  private drawAxes(view: ViewState): void {
    const axisColor = '#888';
    this.svg.appendChild(svgEl('line', {
      x1: MARGIN.left, y1: HEIGHT - MARGIN.bottom,
      x2: WIDTH - MARGIN.right, y2: HEIGHT - MARGIN.bottom, stroke: axisColor,
    }));
    this.svg.appendChild(svgEl('line', {
      x1: MARGIN.left, y1: MARGIN.top, x2: MARGIN.left, y2: HEIGHT - MARGIN.bottom,
      stroke: axisColor,
    }));
    const xLabel = svgEl('text', {
      x: (MARGIN.left + WIDTH - MARGIN.right) / 2, y: HEIGHT - 8,
      'text-anchor': 'middle', class: 'axis-label',
    });
    xLabel.textContent = view.xAxis;
    const yLabel = svgEl('text', {
      x: 14, y: (MARGIN.top + HEIGHT - MARGIN.bottom) / 2, 'text-anchor': 'middle',
      transform: `rotate(-90 14 ${(MARGIN.top + HEIGHT - MARGIN.bottom) / 2})`,
      class: 'axis-label',
    });
    yLabel.textContent = view.yAxis;
    this.svg.append(xLabel, yLabel);
  }

  private drawLegend(order: string[]): void {
    order.forEach((lexeme, i) => {
      const y = MARGIN.top + 14 * i;
      this.svg.appendChild(svgEl('circle', {
        cx: WIDTH - MARGIN.right - 86, cy: y, r: 4,
        fill: lexemeColor(lexeme, order), class: 'legend-dot',
      }));
      const label = svgEl('text', {
        x: WIDTH - MARGIN.right - 76, y: y + 4, class: 'legend-label',
      });
      label.textContent = lexeme;
      this.svg.appendChild(label);
    });
  }

  private drawSelection(rect: Rect): void {
    const x = this.xScale(rect.xmin);
    const y = this.yScale(rect.ymax);
    this.svg.appendChild(svgEl('rect', {
      x,
      y,
      width: this.xScale(rect.xmax) - x,
      height: this.yScale(rect.ymin) - y,
      class: 'selection-rect',
      fill: 'none',
      stroke: '#333',
      'stroke-dasharray': '4 3',
    }));
  }

  private wireDrag(): void {
    let start: { x: number; y: number } | null = null;
    let band: SVGRectElement | null = null;

    const toLocal = (e: MouseEvent) => {
      const box = this.svg.getBoundingClientRect();
      const sx = box.width > 0 ? WIDTH / box.width : 1;
      const sy = box.height > 0 ? HEIGHT / box.height : 1;
      return { x: (e.clientX - box.left) * sx, y: (e.clientY - box.top) * sy };
    };

    this.svg.addEventListener('mousedown', (e) => {
      start = toLocal(e);
      band = svgEl('rect', {
        x: start.x, y: start.y, width: 0, height: 0,
        class: 'drag-band', fill: 'rgba(60,60,60,0.1)', stroke: '#555',
      });
      this.svg.appendChild(band);
    });
    this.svg.addEventListener('mousemove', (e) => {
      if (!start || !band) return;
      const cur = toLocal(e);
      band.setAttribute('x', String(Math.min(start.x, cur.x)));
      band.setAttribute('y', String(Math.min(start.y, cur.y)));
      band.setAttribute('width', String(Math.abs(cur.x - start.x)));
      band.setAttribute('height', String(Math.abs(cur.y - start.y)));
    });
    this.svg.addEventListener('mouseup', (e) => {
      if (!start) return;
      const end = toLocal(e);
      band?.remove();
      const rect = normalizeRect(
        this.xScale.invert(start.x),
        this.xScale.invert(end.x),
        this.yScale.invert(start.y),
        this.yScale.invert(end.y),
      );
      start = null;
      band = null;
      this.onSelect(rect);
    });
  }
}
