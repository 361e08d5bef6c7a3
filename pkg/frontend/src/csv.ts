/** Minimal CSV reader for the solver sweep outputs. */

export interface Table {
  columns: string[];
  rows: string[][];
}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new Error('empty CSV file');
  }
  const columns = lines[0].split(',');
  const rows = lines.slice(1).map((line) => line.split(','));
  return { columns, rows };
}

/** Validate the schema and return per-column accessors.
 *
 * Errors name the offending column so schema drift between the solver
 * harness and this pipeline surfaces immediately.
 */
export function requireColumns(table: Table, names: string[], source: string): Map<string, number> {
  const index = new Map<string, number>();
  for (const name of names) {
    const at = table.columns.indexOf(name);
    if (at < 0) {
      throw new Error(
        `${source}: missing column '${name}' (found: ${table.columns.join(', ')})`,
      );
    }
    index.set(name, at);
  }
  return index;
}

export function column(table: Table, index: Map<string, number>, name: string): string[] {
  const at = index.get(name);
  if (at === undefined) {
    throw new Error(`column '${name}' was not requested`);
  }
  return table.rows.map((row) => row[at] ?? '');
}
