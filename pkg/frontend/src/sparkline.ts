// Minimal inline-SVG sparkline, no charting dependency.

import type { SeriesPoint } from './viewModels.js';

export function sparklinePath(
  points: SeriesPoint[],
  width = 120,
  height = 24,
): string {
  if (points.length === 0) return '';
  const values = points.map((p) => p.value);
  const low = Math.min(...values);
  const high = Math.max(...values);
  const span = high - low || 1;
  const stepX = points.length > 1 ? width / (points.length - 1) : 0;
  return points
    .map((point, i) => {
      const x = (i * stepX).toFixed(2);
      const y = (height - ((point.value - low) / span) * height).toFixed(2);
      return `${i === 0 ? 'M' : 'L'}${x},${y}`;
    })
    .join(' ');
}

export function sparklineSvg(points: SeriesPoint[], width = 120, height = 24): string {
  const path = sparklinePath(points, width, height);
  if (!path) return '<svg class="spark" width="120" height="24"></svg>';
  return (
    `<svg class="spark" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">` +
    `<path d="${path}" fill="none" stroke="currentColor" stroke-width="1.5"/></svg>`
  );
}
