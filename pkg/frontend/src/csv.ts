/** Minimal strict CSV reader for the simulator's output files.
 *
 * Files are UTF-8 with a header row, comma separators, '.' decimal points
 * and no quoted fields.  Every record must have exactly as many cells as
 * the header.  Parsed tables are deeply frozen so downstream code cannot
 * mutate the numbers it plots.
 */

export interface Table {
  readonly columns: readonly string[];
  readonly rows: readonly Readonly<Record<string, string>>[];
}

export function parseCsv(text: string, source = "<csv>"): Table {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new Error(`${source}: empty file`);
  }
  const columns = lines[0].split(",").map((c) => c.trim());
  if (new Set(columns).size !== columns.length) {
    throw new Error(`${source}: duplicate column names`);
  }
  const rows = lines.slice(1).map((line, i) => {
    const cells = line.split(",");
    if (cells.length !== columns.length) {
      throw new Error(
        `${source}: row ${i + 2} has ${cells.length} cells, header has ${columns.length}`,
      );
    }
    const row: Record<string, string> = {};
    columns.forEach((c, j) => {
      row[c] = cells[j].trim();
    });
    return Object.freeze(row);
  });
  if (rows.length === 0) {
    throw new Error(`${source}: no data rows`);
  }
  return Object.freeze({ columns: Object.freeze(columns), rows: Object.freeze(rows) });
}

/** Require the named columns to exist, with the file name in the error. */
export function requireColumns(table: Table, needed: readonly string[], source: string): void {
  const missing = needed.filter((c) => !table.columns.includes(c));
  if (missing.length > 0) {
    throw new Error(`${source}: missing column(s) ${missing.join(", ")}`);
  }
}

/** Numeric cell access; NaN and empty cells are rejected loudly. */
export function num(row: Readonly<Record<string, string>>, column: string): number {
  const raw = row[column];
  const value = Number(raw);
  if (raw === undefined || raw === "" || Number.isNaN(value)) {
    throw new Error(`column ${column}: non-numeric cell ${JSON.stringify(raw)}`);
  }
  return value;
}
