import { ApiClient, Axis, AXES, Bundle, BundlePoint } from './api.js';
import { AudioPlayer } from './audio.js';
import { ExplorerController } from './controller.js';
import { ScatterPlot } from './scatter.js';
import { ViewState } from './state.js';

function byId(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

async function boot(): Promise<void> {
  const api = new ApiClient('');
  const state = new ViewState();
  const panelEl = byId('stats-panel');
  const noticeEl = byId('audio-notice');
  const player = new AudioPlayer(api, noticeEl);

  let bundle: Bundle;
  try {
    bundle = await api.points();
  } catch (err) {
    byId('error-banner').textContent = `failed to load bundle: ${String(err)}`;
    return;
  }
  byId('meta').textContent =
    `${bundle.points.length} points, model ${bundle.axes.model_hash?.slice(0, 12) ?? 'n/a'}`;

  const plot = new ScatterPlot(
    byId('scatter-host'),
    (rect) => void controller.selectRegion(rect),
    (point: BundlePoint) => void player.play(point),
  );
  const redraw = () => plot.render(bundle.points, state);
  const controller = new ExplorerController(api, state, panelEl, redraw);

  const xSelect = byId('x-axis') as HTMLSelectElement;
  const ySelect = byId('y-axis') as HTMLSelectElement;
  for (const axis of AXES) {
    xSelect.add(new Option(axis, axis, false, axis === state.xAxis));
    ySelect.add(new Option(axis, axis, false, axis === state.yAxis));
  }
  const onAxisChange = () => {
    const x = xSelect.value as Axis;
    const y = ySelect.value as Axis;
    if (x === y) {
      // keep the axes distinct by swapping instead of rejecting the click
      void controller.swapAxes();
      xSelect.value = state.xAxis;
      ySelect.value = state.yAxis;
    } else {
      state.setAxes(x, y);
      controller.clearSelection();
    }
    redraw();
  };
  xSelect.addEventListener('change', onAxisChange);
  ySelect.addEventListener('change', onAxisChange);
  byId('swap-axes').addEventListener('click', () => {
    void controller.swapAxes().then(() => {
      xSelect.value = state.xAxis;
      ySelect.value = state.yAxis;
      redraw();
    });
  });
  byId('clear-selection').addEventListener('click', () => {
    controller.clearSelection();
    redraw();
  });

  const filterHost = byId('lexeme-filters');
  const lexemes = [...new Set(bundle.points.map((p) => p.lexeme))].sort();
  for (const lexeme of lexemes) {
    const label = document.createElement('label');
    const box = document.createElement('input');
    box.type = 'checkbox';
    box.value = lexeme;
    box.addEventListener('change', () => {
      void controller.toggleLexeme(lexeme).then(redraw);
    });
    label.append(box, document.createTextNode(lexeme));
    filterHost.appendChild(label);
  }

  redraw();
}

void boot();
