// Strip-chart geometry: map a telemetry series onto canvas points. Pure
// coordinate mapping; the values themselves are passed through untouched.

export interface ChartRange {
  min: number;
  max: number;
}

/** Range covering the series with ~5% padding; degenerate series get a unit band. */
export function autoRange(values: number[]): ChartRange {
  if (values.length === 0) return { min: -1, max: 1 };
  let min = Math.min(...values);
  let max = Math.max(...values);
  if (max - min < 1e-9) {
    min -= 0.5;
    max += 0.5;
  }
  const pad = 0.05 * (max - min);
  return { min: min - pad, max: max + pad };
}

/** Polyline pixel coordinates for a series drawn left-to-right. */
export function polyline(
  values: number[],
  width: number,
  height: number,
  range: ChartRange,
): Array<[number, number]> {
  const n = values.length;
  if (n === 0) return [];
  const span = range.max - range.min;
  return values.map((v, i) => {
    const x = n === 1 ? width : (i / (n - 1)) * width;
    const y = height - ((v - range.min) / span) * height;
    return [x, y] as [number, number];
  });
}

/** Pixel row of a horizontal rule at a given value (e.g. the h = 0 line). */
export function ruleY(value: number, height: number, range: ChartRange): number {
  return height - ((value - range.min) / (range.max - range.min)) * height;
}
