// Chart helpers for the telemetry panel. Values pass through from the
// server series untouched; the only arithmetic here maps them onto screen
// coordinates for drawing.

import type { SeriesRow } from "./api";

export interface ChartPoint {
  x: number;
  y: number;
}

export function chartPoints(series: SeriesRow[], xField: string, yField: string): ChartPoint[] {
  return series.map((row, i) => {
    if (!(xField in row) || !(yField in row)) {
      throw new Error(`series row ${i} lacks ${xField} or ${yField}`);
    }
    return { x: row[xField], y: row[yField] };
  });
}

// Non-mutating ascending sort; ties keep server order.
export function sortByField(series: SeriesRow[], field: string): SeriesRow[] {
  return [...series].sort((a, b) => a[field] - b[field]);
}

export interface PlotBox {
  left: number;
  top: number;
  width: number;
  height: number;
}

export interface Scale {
  toSvg(p: ChartPoint): { sx: number; sy: number };
  xMin: number;
  xMax: number;
  yMin: number;
  yMax: number;
}

export function fitScale(points: ChartPoint[], box: PlotBox): Scale {
  let xMin = Infinity;
  let xMax = -Infinity;
  let yMin = Infinity;
  let yMax = -Infinity;
  for (const p of points) {
    xMin = Math.min(xMin, p.x);
    xMax = Math.max(xMax, p.x);
    yMin = Math.min(yMin, p.y);
    yMax = Math.max(yMax, p.y);
  }
  if (points.length === 0) {
    xMin = xMax = yMin = yMax = 0;
  }
  const xSpan = xMax - xMin || 1;
  const ySpan = yMax - yMin || 1;
  return {
    xMin,
    xMax,
    yMin,
    yMax,
    toSvg: (p) => ({
      sx: box.left + ((p.x - xMin) / xSpan) * box.width,
      sy: box.top + box.height - ((p.y - yMin) / ySpan) * box.height,
    }),
  };
}

export function polylineAttr(points: ChartPoint[], scale: Scale): string {
  return points
    .map((p) => {
      const { sx, sy } = scale.toSvg(p);
      return `${sx.toFixed(1)},${sy.toFixed(1)}`;
    })
    .join(" ");
}
