export { parseCsv, requireColumns } from './csv.js';
export { renderHeatmap, renderResiduals, renderStates } from './figures.js';
export { loadSpec, renderSpec, type FigureSpec } from './figspec.js';
