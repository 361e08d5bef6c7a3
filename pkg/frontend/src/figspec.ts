/** Figure specifications: a small TOML file names the kind, the input CSVs
 * from a sweep run directory, labels and the output image path.
 *
 *   kind = "heatmap"                # heatmap | residuals | states
 *   summary = "sweep/summary.csv"   # heatmap input
 *   runs = ["sweep/residuals/a.csv"]  # residuals inputs
 *   input = "sweep/states/a.csv"    # states input
 *   title = "..."                   # optional
 *   output = "figure.svg"
 *
 * Relative paths resolve against the spec file's directory.
 */
import { readFileSync } from 'node:fs';
import { basename, dirname, resolve } from 'node:path';
import { parse as parseToml } from 'smol-toml';

import { renderHeatmap, renderResiduals, renderStates } from './figures.js';

export interface FigureSpec {
  kind: 'heatmap' | 'residuals' | 'states';
  output: string;
  title: string;
  summary?: string;
  runs?: string[];
  input?: string;
  baseDir: string;
}

const KINDS = ['heatmap', 'residuals', 'states'];

export function loadSpec(path: string): FigureSpec {
  const raw = parseToml(readFileSync(path, 'utf8')) as Record<string, unknown>;
  const kind = String(raw.kind ?? '');
  if (!KINDS.includes(kind)) {
    throw new Error(`figure spec: kind must be one of ${KINDS.join(', ')}, got '${kind}'`);
  }
  if (typeof raw.output !== 'string' || raw.output.length === 0) {
    throw new Error('figure spec: output path is required');
  }
  const spec: FigureSpec = {
    kind: kind as FigureSpec['kind'],
    output: raw.output,
    title: typeof raw.title === 'string' ? raw.title : kind,
    baseDir: dirname(resolve(path)),
  };
  if (kind === 'heatmap') {
    if (typeof raw.summary !== 'string') {
      throw new Error("figure spec: heatmap requires 'summary' (path to summary.csv)");
    }
    spec.summary = raw.summary;
  } else if (kind === 'residuals') {
    if (!Array.isArray(raw.runs) || raw.runs.length === 0) {
      throw new Error("figure spec: residuals requires 'runs' (list of residual CSV paths)");
    }
    spec.runs = raw.runs.map(String);
  } else {
    if (typeof raw.input !== 'string') {
      throw new Error("figure spec: states requires 'input' (path to a states CSV)");
    }
    spec.input = raw.input;
  }
  return spec;
}

export function renderSpec(spec: FigureSpec): string {
  const at = (p: string) => resolve(spec.baseDir, p);
  if (spec.kind === 'heatmap') {
    const path = at(spec.summary!);
    return renderHeatmap(readFileSync(path, 'utf8'), spec.title, basename(path));
  }
  if (spec.kind === 'residuals') {
    const runs = spec.runs!.map((p) => ({
      label: basename(p).replace(/\.csv$/, ''),
      text: readFileSync(at(p), 'utf8'),
      source: basename(p),
    }));
    return renderResiduals(runs, spec.title);
  }
  const path = at(spec.input!);
  return renderStates(readFileSync(path, 'utf8'), spec.title, basename(path));
}
