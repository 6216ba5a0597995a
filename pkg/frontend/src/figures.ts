/** Figure builders: one per CSV schema the simulator emits.
 *
 * Each builder groups rows into series, picks axis scales (log y for CCDF,
 * BER and RMSE figures) and returns a complete SVG document.  Rows are
 * plotted exactly as stored — the only filtering is dropping zero values
 * that a log axis cannot place.
 */

import { Table, num, requireColumns } from "./csv.js";
import { PLOT, Series, linearScale, logScale, renderChart, seriesColor } from "./svg.js";

export type FigureKind = "ccdf" | "ber" | "rate" | "rmse" | "loss";

export const FIGURE_KINDS: readonly FigureKind[] = ["ccdf", "ber", "rate", "rmse", "loss"];

interface Input {
  table: Table;
  source: string;
}

type Row = Readonly<Record<string, string>>;

function concatRows(inputs: Input[], needed: readonly string[]): Row[] {
  const rows: Row[] = [];
  for (const input of inputs) {
    requireColumns(input.table, needed, input.source);
    rows.push(...input.table.rows);
  }
  return rows;
}

function groupBy(rows: Row[], keys: readonly string[]): Map<string, Row[]> {
  const groups = new Map<string, Row[]>();
  for (const row of rows) {
    const label = keys
      .map((k) => row[k])
      .filter((v) => v !== undefined && v !== "")
      .join(" ");
    const bucket = groups.get(label);
    if (bucket) {
      bucket.push(row);
    } else {
      groups.set(label, [row]);
    }
  }
  return groups;
}

function sortedPoints(rows: Row[], xCol: string, yCol: string): { x: number; y: number }[] {
  return rows
    .map((r) => ({ x: num(r, xCol), y: num(r, yCol) }))
    .sort((a, b) => a.x - b.x);
}

function positive(points: { x: number; y: number }[]): { x: number; y: number }[] {
  return points.filter((p) => p.y > 0);
}

function bounds(values: number[], what: string): [number, number] {
  if (values.length === 0) {
    throw new Error(`no plottable ${what} values (log axes skip zeros)`);
  }
  return [Math.min(...values), Math.max(...values)];
}

function logLinearChart(opts: {
  title: string;
  xLabel: string;
  yLabel: string;
  rows: Row[];
  xCol: string;
  yCol: string;
  groupKeys: readonly string[];
  dashedLabels?: Map<string, { yCol: string; fromLabel: string }>;
  xLog?: boolean;
}): string {
  const groups = groupBy(opts.rows, opts.groupKeys);
  const series: Series[] = [];
  let index = 0;
  for (const [label, rows] of groups) {
    series.push({
      label,
      points: positive(sortedPoints(rows, opts.xCol, opts.yCol)),
      color: seriesColor(index),
    });
    index += 1;
  }
  if (opts.dashedLabels) {
    for (const [label, spec] of opts.dashedLabels) {
      const rows = groups.get(spec.fromLabel) ?? opts.rows;
      series.push({
        label,
        points: positive(sortedPoints(rows, opts.xCol, spec.yCol)),
        color: "#444444",
        dashed: true,
      });
    }
  }
  const ys = series.flatMap((s) => s.points.map((p) => p.y));
  const [yLo, yHi] = bounds(ys, opts.yCol);
  const xs = series.flatMap((s) => s.points.map((p) => p.x));
  const [xLo, xHi] = bounds(xs, opts.xCol);
  return renderChart({
    title: opts.title,
    xLabel: opts.xLabel,
    yLabel: opts.yLabel,
    x: opts.xLog
      ? logScale(xLo, xHi, PLOT.x0, PLOT.x1)
      : linearScale(xLo, xHi, PLOT.x0, PLOT.x1),
    y: logScale(yLo, yHi, PLOT.y0, PLOT.y1),
    series,
  });
}

function ccdfFigure(inputs: Input[]): string {
  const rows = concatRows(inputs, ["waveform", "n", "threshold_db", "ccdf"]);
  return logLinearChart({
    title: "Peak-to-average power CCDF",
    xLabel: "PAPR threshold (dB)",
    yLabel: "CCDF",
    rows,
    xCol: "threshold_db",
    yCol: "ccdf",
    groupKeys: ["waveform", "n"],
  });
}

function berFigure(inputs: Input[]): string {
  const rows = concatRows(inputs, ["method", "snr_db", "ber"]);
  const snrValues = new Set(rows.map((r) => r["snr_db"]));
  const overPn = snrValues.size <= 1 && rows.every((r) => r["sigma_theta2"] !== undefined);
  return logLinearChart({
    title: overPn ? "Bit error rate vs phase-noise variance" : "Bit error rate vs SNR",
    xLabel: overPn ? "phase-noise variance (rad^2/sample)" : "SNR (dB)",
    yLabel: "BER",
    rows,
    xCol: overPn ? "sigma_theta2" : "snr_db",
    yCol: "ber",
    groupKeys: ["waveform", "method"],
    xLog: overPn,
  });
}

function rateFigure(inputs: Input[]): string {
  const rows = concatRows(inputs, ["scheme", "delay_spread_s", "rate_bps"]);
  const groups = groupBy(rows, ["scheme"]);
  const series: Series[] = [];
  let index = 0;
  for (const [label, groupRows] of groups) {
    series.push({
      label,
      points: sortedPoints(groupRows, "delay_spread_s", "rate_bps"),
      color: seriesColor(index),
    });
    index += 1;
  }
  const xs = series.flatMap((s) => s.points.map((p) => p.x));
  const ys = series.flatMap((s) => s.points.map((p) => p.y));
  return renderChart({
    title: "Achievable rate vs delay spread",
    xLabel: "delay spread (s)",
    yLabel: "rate (bit/s)",
    x: linearScale(Math.min(...xs), Math.max(...xs), PLOT.x0, PLOT.x1),
    y: linearScale(Math.min(...ys), Math.max(...ys), PLOT.y0, PLOT.y1),
    series,
  });
}

function rmseFigure(inputs: Input[]): string {
  const rows = concatRows(inputs, ["estimator", "snr_db", "rmse", "crlb_rmse"]);
  const firstEstimator = rows[0]["estimator"];
  return logLinearChart({
    title: "Estimation RMSE vs SNR",
    xLabel: "SNR (dB)",
    yLabel: "RMSE",
    rows,
    xCol: "snr_db",
    yCol: "rmse",
    groupKeys: ["estimator"],
    dashedLabels: new Map([["bound", { yCol: "crlb_rmse", fromLabel: firstEstimator }]]),
  });
}

function lossFigure(inputs: Input[]): string {
  const rows = concatRows(inputs, [
    "stage", "epoch", "train_loss_c", "train_loss_s", "test_loss_c", "test_loss_s",
  ]);
  const stages = groupBy(rows, ["stage"]);
  const series: Series[] = [];
  let index = 0;
  for (const [stage, stageRows] of stages) {
    for (const column of ["train_loss_c", "test_loss_c", "train_loss_s", "test_loss_s"]) {
      series.push({
        label: `${stage} ${column.replace("_loss_", " loss ")}`,
        points: positive(sortedPoints(stageRows, "epoch", column)),
        color: seriesColor(index),
        dashed: column.startsWith("test"),
      });
      index += 1;
    }
  }
  const ys = series.flatMap((s) => s.points.map((p) => p.y));
  const [yLo, yHi] = bounds(ys, "loss");
  const xs = series.flatMap((s) => s.points.map((p) => p.x));
  return renderChart({
    title: "Training loss",
    xLabel: "epoch",
    yLabel: "loss",
    x: linearScale(Math.min(...xs), Math.max(...xs), PLOT.x0, PLOT.x1),
    y: logScale(yLo, yHi, PLOT.y0, PLOT.y1),
    series,
  });
}

const BUILDERS: Record<FigureKind, (inputs: Input[]) => string> = {
  ccdf: ccdfFigure,
  ber: berFigure,
  rate: rateFigure,
  rmse: rmseFigure,
  loss: lossFigure,
};

export function renderFigure(kind: FigureKind, inputs: Input[]): string {
  const builder = BUILDERS[kind];
  if (!builder) {
    throw new Error(`unknown figure kind ${kind}; expected ${FIGURE_KINDS.join("|")}`);
  }
  if (inputs.length === 0) {
    throw new Error("at least one input CSV is required");
  }
  return builder(inputs);
}
