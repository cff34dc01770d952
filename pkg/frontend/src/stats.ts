export interface Bins {
  edges: number[]; // length nbins + 1, uniform tiling of [lo, hi]
  counts: number[][]; // one count array per input series
}

export function quantile(sorted: number[], q: number): number {
  const n = sorted.length;
  if (n === 0) return NaN;
  const pos = (n - 1) * q;
  const lo = Math.floor(pos);
  const hi = Math.ceil(pos);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo);
}

export function fdWidth(values: number[]): number {
  const s = [...values].sort((a, b) => a - b);
  const iqr = quantile(s, 0.75) - quantile(s, 0.25);
  return (2 * iqr) / Math.cbrt(s.length);
}

/**
 * Shared histogram grid for a set of series: Freedman-Diaconis width per
 * series, unified by taking the finest positive width, then snapped so an
 * integer number of bins tiles the joint range.
 */
export function unifiedBins(series: number[][], maxBins = 80): Bins {
  const all = series.flat();
  let lo = Math.min(...all);
  let hi = Math.max(...all);
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const widths = series.map(fdWidth).filter((w) => w > 0 && Number.isFinite(w));
  let nbins: number;
  if (widths.length === 0) {
    nbins = Math.max(1, Math.ceil(Math.sqrt(all.length)));
  } else {
    nbins = Math.ceil((hi - lo) / Math.min(...widths));
  }
  nbins = Math.max(1, Math.min(nbins, maxBins));

  const edges: number[] = [];
  for (let i = 0; i <= nbins; i++) {
    edges.push(lo + ((hi - lo) * i) / nbins);
  }
  const counts = series.map((vals) => {
    const c = new Array(nbins).fill(0);
    for (const v of vals) {
      let k = Math.floor(((v - lo) / (hi - lo)) * nbins);
      if (k === nbins) k = nbins - 1; // right edge closed
      c[k] += 1;
    }
    return c;
  });
  return { edges, counts };
}

/** Round tick positions covering [lo, hi] with a 1/2/5 step. */
export function ticks(lo: number, hi: number, target = 5): number[] {
  if (!(hi > lo)) return [lo];
  const raw = (hi - lo) / target;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (mag * m >= raw) {
      step = mag * m;
      break;
    }
  }
  const out: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) {
    // normalize -0 and float dust so labels are stable
    out.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return out;
}
