import { TraceFile, checkPair } from "./trace.js";
import { ticks, unifiedBins } from "./stats.js";

const W = 920;
const H = 380;
const COLOR_UNATTACKED = "#2b6cb0";
const COLOR_ATTACKED = "#c53030";

// coordinate formatter: fixed precision so output bytes are stable
function px(v: number): string {
  const r = Math.round(v * 100) / 100;
  return Object.is(r, -0) ? "0" : r.toString();
}

function label(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e5 || a < 1e-3) return v.toExponential(1);
  return parseFloat(v.toPrecision(6)).toString();
}

interface Panel {
  x0: number;
  x1: number;
  y0: number;
  y1: number;
}

function scale(v: number, lo: number, hi: number, p0: number, p1: number): number {
  return p0 + ((v - lo) / (hi - lo)) * (p1 - p0);
}

function axes(out: string[], p: Panel, xlo: number, xhi: number,
              ylo: number, yhi: number, xlabel: string, ylabel: string): void {
  out.push(`<rect x="${px(p.x0)}" y="${px(p.y1)}" width="${px(p.x1 - p.x0)}" height="${px(p.y0 - p.y1)}" fill="none" stroke="#444" stroke-width="1"/>`);
  for (const t of ticks(xlo, xhi)) {
    const x = scale(t, xlo, xhi, p.x0, p.x1);
    out.push(`<line x1="${px(x)}" y1="${px(p.y0)}" x2="${px(x)}" y2="${px(p.y0 + 4)}" stroke="#444"/>`);
    out.push(`<text x="${px(x)}" y="${px(p.y0 + 17)}" font-size="11" text-anchor="middle" fill="#222">${label(t)}</text>`);
  }
  for (const t of ticks(ylo, yhi)) {
    const y = scale(t, ylo, yhi, p.y0, p.y1);
    out.push(`<line x1="${px(p.x0 - 4)}" y1="${px(y)}" x2="${px(p.x0)}" y2="${px(y)}" stroke="#444"/>`);
    out.push(`<text x="${px(p.x0 - 7)}" y="${px(y + 4)}" font-size="11" text-anchor="end" fill="#222">${label(t)}</text>`);
  }
  out.push(`<text x="${px((p.x0 + p.x1) / 2)}" y="${px(p.y0 + 34)}" font-size="12" text-anchor="middle" fill="#222">${xlabel}</text>`);
  const yc = (p.y0 + p.y1) / 2;
  out.push(`<text x="${px(p.x0 - 44)}" y="${px(yc)}" font-size="12" text-anchor="middle" fill="#222" transform="rotate(-90 ${px(p.x0 - 44)} ${px(yc)})">${ylabel}</text>`);
}

function polyline(out: string[], xs: number[], ys: number[], p: Panel,
                  xlo: number, xhi: number, ylo: number, yhi: number,
                  color: string): void {
  const pts = xs.map((x, i) =>
    `${px(scale(x, xlo, xhi, p.x0, p.x1))},${px(scale(ys[i], ylo, yhi, p.y0, p.y1))}`);
  out.push(`<polyline points="${pts.join(" ")}" fill="none" stroke="${color}" stroke-width="1.6"/>`);
}

function pad(lo: number, hi: number): [number, number] {
  if (lo === hi) return [lo - 0.5, hi + 0.5];
  const m = (hi - lo) * 0.05;
  return [lo - m, hi + m];
}

/**
 * Two-panel figure: statistic vs step for both runs on the left, overlaid
 * histograms of the same values on the right. Pure function of the two
 * traces; rendering twice gives identical bytes.
 */
export function renderPanel(unattacked: TraceFile, attacked: TraceFile): string {
  checkPair(unattacked, attacked);
  const left: Panel = { x0: 62, x1: 560, y0: 316, y1: 30 };
  const right: Panel = { x0: 636, x1: 896, y0: 316, y1: 30 };

  const xs = unattacked.steps;
  const xlo = xs[0];
  const xhi = xs[xs.length - 1];
  const allStats = [...unattacked.statistics, ...attacked.statistics];
  const [ylo, yhi] = pad(
    Math.min(...allStats, unattacked.threshold),
    Math.max(...allStats, unattacked.threshold));

  const out: string[] = [];
  out.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">`);
  out.push(`<rect width="${W}" height="${H}" fill="#ffffff"/>`);

  axes(out, left, xlo, xhi, ylo, yhi, "step", "statistic");
  const thY = scale(unattacked.threshold, ylo, yhi, left.y0, left.y1);
  out.push(`<line x1="${px(left.x0)}" y1="${px(thY)}" x2="${px(left.x1)}" y2="${px(thY)}" stroke="#777" stroke-width="1" stroke-dasharray="5,4"/>`);
  polyline(out, xs, unattacked.statistics, left, xlo, xhi, ylo, yhi, COLOR_UNATTACKED);
  polyline(out, xs, attacked.statistics, left, xlo, xhi, ylo, yhi, COLOR_ATTACKED);

  // legend, top left corner of the trace panel
  const lx = left.x0 + 10;
  out.push(`<line x1="${px(lx)}" y1="42" x2="${px(lx + 22)}" y2="42" stroke="${COLOR_UNATTACKED}" stroke-width="1.6"/>`);
  out.push(`<text x="${px(lx + 27)}" y="46" font-size="12" fill="#222">unattacked</text>`);
  out.push(`<line x1="${px(lx)}" y1="60" x2="${px(lx + 22)}" y2="60" stroke="${COLOR_ATTACKED}" stroke-width="1.6"/>`);
  out.push(`<text x="${px(lx + 27)}" y="64" font-size="12" fill="#222">attacked</text>`);
  out.push(`<line x1="${px(lx)}" y1="78" x2="${px(lx + 22)}" y2="78" stroke="#777" stroke-width="1" stroke-dasharray="5,4"/>`);
  out.push(`<text x="${px(lx + 27)}" y="82" font-size="12" fill="#222">threshold</text>`);

  const bins = unifiedBins([unattacked.statistics, attacked.statistics]);
  const maxCount = Math.max(...bins.counts.flat(), 1);
  const blo = bins.edges[0];
  const bhi = bins.edges[bins.edges.length - 1];
  axes(out, right, blo, bhi, 0, maxCount, "statistic", "count");
  const colors = [COLOR_UNATTACKED, COLOR_ATTACKED];
  for (let s = 0; s < bins.counts.length; s++) {
    for (let k = 0; k < bins.counts[s].length; k++) {
      const c = bins.counts[s][k];
      if (c === 0) continue;
      const bx0 = scale(bins.edges[k], blo, bhi, right.x0, right.x1);
      const bx1 = scale(bins.edges[k + 1], blo, bhi, right.x0, right.x1);
      const by = scale(c, 0, maxCount, right.y0, right.y1);
      out.push(`<rect x="${px(bx0)}" y="${px(by)}" width="${px(bx1 - bx0)}" height="${px(right.y0 - by)}" fill="${colors[s]}" fill-opacity="0.55"/>`);
    }
  }

  out.push("</svg>");
  return out.join("\n") + "\n";
}
