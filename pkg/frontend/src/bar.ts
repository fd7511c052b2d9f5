// Barrier-value bar: vertical gauge with h = 0 at the exact center of the
// range. Blue while the filter is not modifying the action, red while it
// intervenes; a fallback tick additionally raises a warning badge.

export const BAR_SAFE_COLOR = '#2f72d9';
export const BAR_INTERVENE_COLOR = '#d43a2f';

export interface BarStyle {
  color: string;
  warning: boolean;
}

export function barStyle(intervention: number, fallbackUsed: boolean): BarStyle {
  return {
    color: intervention > 0 ? BAR_INTERVENE_COLOR : BAR_SAFE_COLOR,
    warning: fallbackUsed,
  };
}

export interface BarGeometry {
  centerY: number; // pixel row of h = 0
  y: number; // top of the filled segment
  height: number; // filled extent, proportional to |h|
}

/**
 * Filled-segment geometry for a gauge of `heightPx` pixels displaying
 * values in [-range, +range]. Positive h (unsafe side) fills upward from
 * the center, negative h downward; |h| is clamped to the range.
 */
export function barGeometry(
  h: number,
  range: number,
  heightPx: number,
): BarGeometry {
  if (range <= 0 || heightPx <= 0) throw new Error('range and height must be positive');
  const centerY = heightPx / 2;
  const clamped = Math.max(-range, Math.min(range, h));
  const extent = (Math.abs(clamped) / range) * (heightPx / 2);
  return {
    centerY,
    y: clamped > 0 ? centerY - extent : centerY,
    height: extent,
  };
}
