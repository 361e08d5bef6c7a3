/** The three figure kinds rendered from the sweep CSV outputs.
 *
 * Everything consumes only the documented CSV schemas:
 *   summary.csv:            run_id,solver,c,dilation_angle_deg,
 *                           overpressure_pa,status,total_linear_solves,
 *                           outer_iterations
 *   residuals/<run>.csv:    iteration,residual_norm,increment_norm
 *   states/<run>.csv:       iteration,n_open,n_stick,n_slip
 */
import { column, parseCsv, requireColumns, Table } from './csv.js';
import { colorRamp, fmt, logTicks, Svg } from './svg.js';

const SUMMARY_COLUMNS = [
  'run_id',
  'solver',
  'c',
  'dilation_angle_deg',
  'overpressure_pa',
  'status',
  'total_linear_solves',
  'outer_iterations',
];

const SERIES_COLORS = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e', '#8c564b'];

function uniqueInOrder(values: string[]): string[] {
  const seen = new Set<string>();
  const out: string[] = [];
  for (const v of values) {
    if (!seen.has(v)) {
      seen.add(v);
      out.push(v);
    }
  }
  return out;
}

function shortNum(value: string): string {
  const x = Number(value);
  if (!Number.isFinite(x)) return value;
  if (x !== 0 && (Math.abs(x) >= 1e4 || Math.abs(x) < 1e-2)) {
    return x.toExponential(0).replace('+', '');
  }
  return String(x);
}

/** Iteration-count heatmap over (scenario difficulty rows) x (c columns).
 *
 * Non-converged cells carry their status label (NC, Div, NCO) instead of a
 * number, on a muted background.
 */
export function renderHeatmap(summaryText: string, title: string, source: string): string {
  const table = parseCsv(summaryText);
  const idx = requireColumns(table, SUMMARY_COLUMNS, source);
  const solver = column(table, idx, 'solver');
  const c = column(table, idx, 'c');
  const psi = column(table, idx, 'dilation_angle_deg');
  const dp = column(table, idx, 'overpressure_pa');
  const status = column(table, idx, 'status');
  const iters = column(table, idx, 'total_linear_solves');

  const rowKey = (i: number) => `${solver[i]} dp=${shortNum(dp[i])} psi=${psi[i]}`;
  const rowLabels = uniqueInOrder(table.rows.map((_, i) => rowKey(i)));
  const colLabels = uniqueInOrder(c);

  const cell = new Map<string, { status: string; iters: number }>();
  let maxIters = 1;
  for (let i = 0; i < table.rows.length; i++) {
    const key = `${rowKey(i)}|${c[i]}`;
    const n = Number(iters[i]);
    cell.set(key, { status: status[i], iters: n });
    if (status[i] === 'Converged') maxIters = Math.max(maxIters, n);
  }

  const cw = 74;
  const ch = 34;
  const left = 190;
  const top = 54;
  const width = left + cw * colLabels.length + 30;
  const height = top + ch * rowLabels.length + 60;
  const svg = new Svg(width, height);
  svg.text(width / 2, 24, title, { size: 14 });
  colLabels.forEach((label, j) => {
    svg.text(left + cw * (j + 0.5), top - 8, `c=${shortNum(label)}`, { size: 10 });
  });
  rowLabels.forEach((label, i) => {
    svg.text(left - 8, top + ch * (i + 0.62), label, { anchor: 'end', size: 10 });
    colLabels.forEach((cval, j) => {
      const entry = cell.get(`${label}|${cval}`);
      const x = left + cw * j;
      const y = top + ch * i;
      if (!entry) {
        svg.rect(x, y, cw, ch, '#f4f4f4', '#bbb');
        return;
      }
      if (entry.status === 'Converged') {
        const t = Math.log(entry.iters + 1) / Math.log(maxIters + 1);
        svg.rect(x, y, cw, ch, colorRamp(t), '#666');
        svg.text(x + cw / 2, y + ch * 0.62, String(entry.iters), {
          fill: t > 0.6 ? '#111' : '#fff',
          size: 12,
        });
      } else {
        svg.rect(x, y, cw, ch, '#d9d9d9', '#666');
        svg.text(x + cw / 2, y + ch * 0.62, entry.status, { fill: '#7a1313', size: 12 });
      }
    });
  });
  svg.text(left + (cw * colLabels.length) / 2, height - 18, 'augmentation parameter c (GPa/m)', {
    size: 11,
  });
  return svg.render();
}

interface Series {
  label: string;
  points: Array<[number, number]>;
}

function plotFrame(
  svg: Svg,
  box: { left: number; top: number; width: number; height: number },
  title: string,
  xLabel: string,
  yLabel: string,
): void {
  svg.text(box.left + box.width / 2, 22, title, { size: 14 });
  svg.line(box.left, box.top, box.left, box.top + box.height);
  svg.line(box.left, box.top + box.height, box.left + box.width, box.top + box.height);
  svg.text(box.left + box.width / 2, box.top + box.height + 34, xLabel, { size: 11 });
  svg.text(18, box.top + box.height / 2, yLabel, { size: 11, rotate: -90 });
}

/** Residual histories on a log scale, one polyline per run. */
export function renderResiduals(
  runs: Array<{ label: string; text: string; source: string }>,
  title: string,
): string {
  const series: Series[] = runs.map((run) => {
    const table = parseCsv(run.text);
    const idx = requireColumns(table, ['iteration', 'residual_norm'], run.source);
    const it = column(table, idx, 'iteration').map(Number);
    const res = column(table, idx, 'residual_norm').map(Number);
    const points: Array<[number, number]> = [];
    for (let i = 0; i < it.length; i++) {
      if (Number.isFinite(res[i]) && res[i] > 0) {
        points.push([it[i], res[i]]);
      }
    }
    return { label: run.label, points };
  });
  const allY = series.flatMap((s) => s.points.map((p) => p[1]));
  const allX = series.flatMap((s) => s.points.map((p) => p[0]));
  const yMin = Math.min(...allY);
  const yMax = Math.max(...allY);
  const xMax = Math.max(1, ...allX);
  const box = { left: 70, top: 40, width: 520, height: 300 };
  const svg = new Svg(box.left + box.width + 170, box.top + box.height + 60);
  plotFrame(svg, box, title, 'iteration', 'scaled residual norm');

  const ly = (v: number) =>
    box.top +
    box.height -
    ((Math.log10(v) - Math.log10(yMin)) / Math.max(Math.log10(yMax) - Math.log10(yMin), 1e-12)) *
      box.height;
  const lx = (i: number) => box.left + (i / xMax) * box.width;

  for (const tick of logTicks(yMin, yMax)) {
    if (tick < yMin || tick > yMax) continue;
    const y = ly(tick);
    svg.line(box.left - 4, y, box.left, y);
    svg.text(box.left - 8, y + 4, `1e${Math.round(Math.log10(tick))}`, { anchor: 'end', size: 9 });
  }
  const xStep = Math.max(1, Math.ceil(xMax / 10));
  for (let i = 0; i <= xMax; i += xStep) {
    const x = lx(i);
    svg.line(x, box.top + box.height, x, box.top + box.height + 4);
    svg.text(x, box.top + box.height + 18, String(i), { size: 9 });
  }
  series.forEach((s, k) => {
    const color = SERIES_COLORS[k % SERIES_COLORS.length];
    if (s.points.length > 0) {
      svg.polyline(
        s.points.map(([i, v]) => [lx(i), ly(v)] as [number, number]),
        color,
      );
    }
    const yLegend = box.top + 14 + 16 * k;
    svg.line(box.left + box.width + 12, yLegend - 4, box.left + box.width + 34, yLegend - 4, color, 2);
    svg.text(box.left + box.width + 40, yLegend, s.label, { anchor: 'start', size: 10 });
  });
  return svg.render();
}

/** Contact-state census: stacked open/stick/slip areas per iteration. */
export function renderStates(text: string, title: string, source: string): string {
  const table = parseCsv(text);
  const idx = requireColumns(table, ['iteration', 'n_open', 'n_stick', 'n_slip'], source);
  const it = column(table, idx, 'iteration').map(Number);
  const open = column(table, idx, 'n_open').map(Number);
  const stick = column(table, idx, 'n_stick').map(Number);
  const slip = column(table, idx, 'n_slip').map(Number);
  const total = Math.max(1, ...it.map((_, i) => open[i] + stick[i] + slip[i]));
  const xMax = Math.max(1, ...it);

  const box = { left: 70, top: 40, width: 520, height: 300 };
  const svg = new Svg(box.left + box.width + 130, box.top + box.height + 60);
  plotFrame(svg, box, title, 'iteration', 'number of cells');
  const sx = (i: number) => box.left + (i / xMax) * box.width;
  const sy = (v: number) => box.top + box.height - (v / total) * box.height;

  const layers: Array<{ label: string; values: number[]; color: string }> = [
    { label: 'stick', values: stick, color: '#4878a8' },
    { label: 'slip', values: slip, color: '#c44e52' },
    { label: 'open', values: open, color: '#55a868' },
  ];
  let base = it.map(() => 0);
  for (const layer of layers) {
    const upper = base.map((b, i) => b + layer.values[i]);
    const ring: Array<[number, number]> = [
      ...it.map((x, i) => [sx(x), sy(upper[i])] as [number, number]),
      ...it
        .map((x, i) => [sx(x), sy(base[i])] as [number, number])
        .reverse(),
    ];
    svg.polygon(ring, layer.color);
    base = upper;
  }
  const yTickStep = Math.max(1, Math.ceil(total / 8));
  for (let v = 0; v <= total; v += yTickStep) {
    svg.line(box.left - 4, sy(v), box.left, sy(v));
    svg.text(box.left - 8, sy(v) + 4, String(v), { anchor: 'end', size: 9 });
  }
  const xStep = Math.max(1, Math.ceil(xMax / 10));
  for (let i = 0; i <= xMax; i += xStep) {
    svg.line(sx(i), box.top + box.height, sx(i), box.top + box.height + 4);
    svg.text(sx(i), box.top + box.height + 18, String(i), { size: 9 });
  }
  layers.forEach((layer, k) => {
    const y = box.top + 14 + 16 * k;
    svg.rect(box.left + box.width + 12, y - 10, 16, 10, layer.color);
    svg.text(box.left + box.width + 34, y, layer.label, { anchor: 'start', size: 10 });
  });
  return svg.render();
}
