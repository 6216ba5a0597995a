/** Deterministic SVG chart primitives: linear/log scales, axes with tick
 * labels, polylines and a legend.  Numbers are formatted with a fixed
 * precision so identical inputs always yield byte-identical files. */

export interface Scale {
  (value: number): number;
  readonly ticks: readonly number[];
  readonly kind: "linear" | "log";
}

const WIDTH = 640;
const HEIGHT = 440;
const MARGIN = { left: 70, right: 24, top: 28, bottom: 52 };

export const PLOT = {
  width: WIDTH,
  height: HEIGHT,
  x0: MARGIN.left,
  x1: WIDTH - MARGIN.right,
  y0: HEIGHT - MARGIN.bottom,
  y1: MARGIN.top,
} as const;

const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

export function seriesColor(index: number): string {
  return PALETTE[index % PALETTE.length];
}

export function fmt(value: number): string {
  if (!Number.isFinite(value)) {
    throw new Error(`cannot place non-finite coordinate ${value}`);
  }
  return value.toFixed(2);
}

function linearTicks(lo: number, hi: number, count = 6): number[] {
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const err = span / (count * step);
  const unit = err >= 7.5 ? 10 * step : err >= 3 ? 5 * step : err >= 1.5 ? 2 * step : step;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / unit) * unit; v <= hi + unit * 1e-9; v += unit) {
    ticks.push(Math.abs(v) < unit * 1e-9 ? 0 : v);
  }
  return ticks;
}

export function linearScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  if (!(hi > lo)) {
    const pad = Math.abs(lo) > 0 ? Math.abs(lo) * 0.05 : 1;
    lo -= pad;
    hi += pad;
  }
  const scale = ((value: number) =>
    outLo + ((value - lo) / (hi - lo)) * (outHi - outLo)) as Scale & {
    ticks: number[];
    kind: "linear";
  };
  (scale as { ticks: readonly number[] }).ticks = linearTicks(lo, hi);
  (scale as { kind: string }).kind = "linear";
  return scale;
}

export function logScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  if (!(lo > 0) || !(hi > 0)) {
    throw new Error("log scale needs strictly positive bounds");
  }
  const dLo = Math.floor(Math.log10(lo));
  const dHi = Math.ceil(Math.log10(hi));
  const lLo = Math.log10(lo);
  const lHi = Math.log10(hi) > lLo ? Math.log10(hi) : lLo + 1;
  const scale = ((value: number) => {
    if (!(value > 0)) {
      throw new Error(`log scale cannot place ${value}`);
    }
    return outLo + ((Math.log10(value) - lLo) / (lHi - lLo)) * (outHi - outLo);
  }) as Scale & { ticks: number[]; kind: "log" };
  const ticks: number[] = [];
  for (let d = dLo; d <= dHi; d += 1) {
    const t = Math.pow(10, d);
    if (t >= lo * 0.999 && t <= hi * 1.001) ticks.push(t);
  }
  (scale as { ticks: readonly number[] }).ticks = ticks.length >= 2 ? ticks : [lo, hi];
  (scale as { kind: string }).kind = "log";
  return scale;
}

function tickLabel(value: number, kind: "linear" | "log"): string {
  if (kind === "log") {
    const d = Math.round(Math.log10(value));
    if (Math.abs(value - Math.pow(10, d)) / value < 1e-9) return `1e${d}`;
  }
  if (value === 0) return "0";
  const abs = Math.abs(value);
  if (abs >= 1e6 || abs < 1e-3) return value.toExponential(1);
  return String(Number(value.toPrecision(6)));
}

export interface Series {
  label: string;
  points: { x: number; y: number }[];
  color: string;
  dashed?: boolean;
}

export function renderChart(opts: {
  title: string;
  xLabel: string;
  yLabel: string;
  x: Scale;
  y: Scale;
  series: Series[];
}): string {
  const { title, xLabel, yLabel, x, y, series } = opts;
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
      `viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="sans-serif" font-size="12">`,
  );
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  parts.push(`<text x="${WIDTH / 2}" y="18" text-anchor="middle" font-size="14">${title}</text>`);

  for (const t of x.ticks) {
    const px = fmt(x(t));
    parts.push(
      `<line x1="${px}" y1="${PLOT.y0}" x2="${px}" y2="${PLOT.y1}" stroke="#ddd"/>`,
      `<text x="${px}" y="${PLOT.y0 + 18}" text-anchor="middle">${tickLabel(t, x.kind)}</text>`,
    );
  }
  for (const t of y.ticks) {
    const py = fmt(y(t));
    parts.push(
      `<line x1="${PLOT.x0}" y1="${py}" x2="${PLOT.x1}" y2="${py}" stroke="#ddd"/>`,
      `<text x="${PLOT.x0 - 6}" y="${py}" text-anchor="end" dominant-baseline="middle">` +
        `${tickLabel(t, y.kind)}</text>`,
    );
  }
  parts.push(
    `<line x1="${PLOT.x0}" y1="${PLOT.y0}" x2="${PLOT.x1}" y2="${PLOT.y0}" stroke="black"/>`,
    `<line x1="${PLOT.x0}" y1="${PLOT.y0}" x2="${PLOT.x0}" y2="${PLOT.y1}" stroke="black"/>`,
    `<text x="${(PLOT.x0 + PLOT.x1) / 2}" y="${HEIGHT - 10}" text-anchor="middle">${xLabel}</text>`,
    `<text x="16" y="${(PLOT.y0 + PLOT.y1) / 2}" text-anchor="middle" ` +
      `transform="rotate(-90 16 ${(PLOT.y0 + PLOT.y1) / 2})">${yLabel}</text>`,
  );

  for (const s of series) {
    if (s.points.length === 0) continue;
    const coords = s.points.map((p) => `${fmt(x(p.x))},${fmt(y(p.y))}`).join(" ");
    const dash = s.dashed ? ` stroke-dasharray="6 4"` : "";
    parts.push(
      `<polyline points="${coords}" fill="none" stroke="${s.color}" stroke-width="1.5"${dash}/>`,
    );
    for (const p of s.points) {
      parts.push(`<circle cx="${fmt(x(p.x))}" cy="${fmt(y(p.y))}" r="2.5" fill="${s.color}"/>`);
    }
  }

  series.forEach((s, i) => {
    const ly = PLOT.y1 + 14 + i * 16;
    const lx = PLOT.x1 - 170;
    const dash = s.dashed ? ` stroke-dasharray="6 4"` : "";
    parts.push(
      `<line x1="${lx}" y1="${ly}" x2="${lx + 26}" y2="${ly}" stroke="${s.color}" ` +
        `stroke-width="1.5"${dash}/>`,
      `<text x="${lx + 32}" y="${ly + 4}">${s.label}</text>`,
    );
  });

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
