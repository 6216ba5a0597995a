#!/usr/bin/env node
/** plot --kind {ccdf|ber|rate|rmse|loss} --in <csv>... --out <svg>
 *
 * Reads one or more simulator CSVs and writes a single SVG figure.  Exits
 * nonzero with a one-line error for unknown kinds, unreadable files,
 * missing columns or empty data.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { basename } from "node:path";

import { parseCsv } from "./csv.js";
import { FIGURE_KINDS, FigureKind, renderFigure } from "./figures.js";

interface Args {
  kind: FigureKind;
  inputs: string[];
  out: string;
}

export function parseArgs(argv: string[]): Args {
  let kind: string | undefined;
  let out: string | undefined;
  const inputs: string[] = [];
  for (let i = 0; i < argv.length; i += 1) {
    const arg = argv[i];
    if (arg === "--kind") {
      kind = argv[++i];
    } else if (arg === "--out") {
      out = argv[++i];
    } else if (arg === "--in") {
      while (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
        inputs.push(argv[++i]);
      }
    } else {
      throw new Error(`unknown argument ${arg}`);
    }
  }
  if (!kind || !(FIGURE_KINDS as readonly string[]).includes(kind)) {
    throw new Error(`--kind must be one of ${FIGURE_KINDS.join("|")}`);
  }
  if (inputs.length === 0) {
    throw new Error("--in needs at least one CSV path");
  }
  if (!out) {
    throw new Error("--out is required");
  }
  return { kind: kind as FigureKind, inputs, out };
}

export function main(argv: string[]): number {
  try {
    const args = parseArgs(argv);
    const tables = args.inputs.map((path) => ({
      table: parseCsv(readFileSync(path, "utf-8"), basename(path)),
      source: basename(path),
    }));
    const svg = renderFigure(args.kind, tables);
    writeFileSync(args.out, svg, "utf-8");
    process.stdout.write(`wrote ${args.out}\n`);
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
}

if (process.argv[1] && /cli\.(js|ts)$/.test(process.argv[1])) {
  process.exit(main(process.argv.slice(2)));
}
