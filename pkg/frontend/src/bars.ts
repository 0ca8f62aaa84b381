import { LinearScale, paddedDomain } from './scale.js';
import { MARGIN, PanelLayout, legend, title, xLabels, yAxis } from './layout.js';
import { SummaryRow } from './types.js';
import { document, tag } from './svg.js';

export const BAR_COLUMNS = ['mean', 'std'];

/**
 * One bar per summary row, from zero to the stored mean, with the mean as
 * a solid horizontal line and a vertical +-1 std interval through it.
 */
export function renderBars(rows: SummaryRow[], width: number, height: number,
                           heading?: string): string {
  const layout = new PanelLayout(rows, width);
  const span = rows.flatMap(r => [
    r.values['mean'] - r.values['std'],
    r.values['mean'] + r.values['std'],
  ]);
  span.push(0); // bars grow from the zero line
  const [lo, hi] = paddedDomain(span);
  const scale = new LinearScale(lo, hi, MARGIN.top, height - MARGIN.bottom);

  const parts: string[] = [];
  parts.push(...title(heading, width));
  parts.push(...yAxis(scale, layout.left, width - MARGIN.right));
  parts.push(...xLabels(layout, height - MARGIN.bottom + 18));
  parts.push(...legend(layout, width - MARGIN.right));

  const y0 = scale.y(0);
  for (const row of rows) {
    const mean = row.values['mean'];
    const std = row.values['std'];
    const cx = layout.centerX(row.evalEnv, row.method);
    const bw = Math.min(36, layout.slotWidth() * 0.7);
    const fill = layout.methodColor(row.method);
    const yMean = scale.y(mean);
    parts.push(tag('rect', {
      x: cx - bw / 2, y: Math.min(y0, yMean),
      width: bw, height: Math.abs(yMean - y0),
      fill, 'fill-opacity': 0.45, stroke: 'none', class: 'bar',
    }));
    parts.push(tag('line', {
      x1: cx - bw / 2, y1: yMean, x2: cx + bw / 2, y2: yMean,
      stroke: fill, 'stroke-width': 2, class: 'mean',
    }));
    parts.push(tag('line', {
      x1: cx, y1: scale.y(mean - std), x2: cx, y2: scale.y(mean + std),
      stroke: '#333', 'stroke-width': 1.2, class: 'std',
    }));
  }
  return document(width, height, parts);
}
