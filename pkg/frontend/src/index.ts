export { parseCsv, requireColumns, num } from "./csv.js";
export type { Table } from "./csv.js";
export { renderFigure, FIGURE_KINDS } from "./figures.js";
export type { FigureKind } from "./figures.js";
export { main, parseArgs } from "./cli.js";
