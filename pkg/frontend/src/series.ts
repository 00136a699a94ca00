/** Chart view-model for time series.
 *
 * The client performs no analytics: every plotted number is a value taken
 * verbatim from a service response. Empty aggregation bins (count 0) break
 * the line so data gaps stay visible instead of being interpolated over.
 */

import { SeriesPointJson } from "./types.js";

export interface PlottedPoint {
  ts: string;
  value: number;
}

/** Split a point list into line segments, breaking at empty bins. */
export function toSegments(points: SeriesPointJson[]): PlottedPoint[][] {
  const segments: PlottedPoint[][] = [];
  let current: PlottedPoint[] = [];
  for (const p of points) {
    if (p.value === null) {
      if (current.length > 0) segments.push(current);
      current = [];
    } else {
      current.push({ ts: p.ts, value: p.value });
    }
  }
  if (current.length > 0) segments.push(current);
  return segments;
}

/** The numbers a chart of these points displays, in order, nulls dropped. */
export function renderedValues(points: SeriesPointJson[]): number[] {
  return points.filter(p => p.value !== null).map(p => p.value as number);
}

export function totalPoints(series: Record<string, SeriesPointJson[]>): number {
  return Object.values(series).reduce(
    (n, pts) => n + pts.filter(p => p.value !== null).length, 0);
}

export interface ChartScale {
  x: (ts: string) => number;
  y: (value: number) => number;
  tMin: number;
  tMax: number;
  vMin: number;
  vMax: number;
}

/** Affine mapping from (timestamp, value) onto a width x height canvas.
 *  Degenerate extents pad out so single points still land inside. */
export function chartScale(series: Record<string, SeriesPointJson[]>,
                           width: number, height: number,
                           margin = 0): ChartScale {
  let tMin = Infinity, tMax = -Infinity, vMin = Infinity, vMax = -Infinity;
  for (const points of Object.values(series)) {
    for (const p of points) {
      if (p.value === null) continue;
      const t = Date.parse(p.ts);
      if (t < tMin) tMin = t;
      if (t > tMax) tMax = t;
      if (p.value < vMin) vMin = p.value;
      if (p.value > vMax) vMax = p.value;
    }
  }
  if (!Number.isFinite(tMin)) {
    tMin = 0; tMax = 1; vMin = 0; vMax = 1;
  }
  if (tMin === tMax) tMax = tMin + 1;
  if (vMin === vMax) {
    vMin -= 0.5;
    vMax += 0.5;
  }
  const innerW = width - 2 * margin;
  const innerH = height - 2 * margin;
  return {
    x: ts => margin + ((Date.parse(ts) - tMin) / (tMax - tMin)) * innerW,
    y: v => margin + (1 - (v - vMin) / (vMax - vMin)) * innerH,
    tMin, tMax, vMin, vMax,
  };
}

export const SERIES_COLORS = [
  "#1b7f4d", "#b54b0a", "#3457a6", "#8e3b8e", "#946f00", "#0f7a86",
];

export function seriesColor(index: number): string {
  return SERIES_COLORS[index % SERIES_COLORS.length];
}
