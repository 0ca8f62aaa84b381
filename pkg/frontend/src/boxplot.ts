import { LinearScale, paddedDomain } from './scale.js';
import { MARGIN, PanelLayout, legend, title, xLabels, yAxis } from './layout.js';
import { SummaryRow } from './types.js';
import { document, tag } from './svg.js';

export const BOX_COLUMNS = ['median', 'q1', 'q3', 'wlow', 'whigh', 'max'];

/**
 * One box per summary row: IQR box with a median bar, whiskers at the
 * stored 1.5*IQR fences, and the maximum as a hollow circle. No other
 * individual points are drawn.
 */
export function renderBoxplot(rows: SummaryRow[], width: number, height: number,
                              heading?: string): string {
  const layout = new PanelLayout(rows, width);
  const span = rows.flatMap(r => BOX_COLUMNS.map(c => r.values[c]));
  const [lo, hi] = paddedDomain(span);
  const scale = new LinearScale(lo, hi, MARGIN.top, height - MARGIN.bottom);

  const parts: string[] = [];
  parts.push(...title(heading, width));
  parts.push(...yAxis(scale, layout.left, width - MARGIN.right));
  parts.push(...xLabels(layout, height - MARGIN.bottom + 18));
  parts.push(...legend(layout, width - MARGIN.right));

  for (const row of rows) {
    const v = row.values;
    const cx = layout.centerX(row.evalEnv, row.method);
    const bw = Math.min(34, layout.slotWidth() * 0.62);
    const stroke = layout.methodColor(row.method);
    const box = (y1: number, y2: number) => tag('line', {
      x1: cx, y1: scale.y(y1), x2: cx, y2: scale.y(y2),
      stroke, 'stroke-width': 1.2, class: 'whisker',
    });
    parts.push(box(v['wlow'], v['q1']));
    parts.push(box(v['q3'], v['whigh']));
    for (const fence of [v['wlow'], v['whigh']]) {
      parts.push(tag('line', {
        x1: cx - bw / 4, y1: scale.y(fence), x2: cx + bw / 4, y2: scale.y(fence),
        stroke, 'stroke-width': 1.2, class: 'fence',
      }));
    }
    parts.push(tag('rect', {
      x: cx - bw / 2, y: scale.y(v['q3']),
      width: bw, height: scale.y(v['q1']) - scale.y(v['q3']),
      fill: stroke, 'fill-opacity': 0.35, stroke, 'stroke-width': 1.2, class: 'box',
    }));
    parts.push(tag('line', {
      x1: cx - bw / 2, y1: scale.y(v['median']), x2: cx + bw / 2, y2: scale.y(v['median']),
      stroke, 'stroke-width': 1.8, class: 'median',
    }));
    parts.push(tag('circle', {
      cx, cy: scale.y(v['max']), r: 3.2,
      fill: 'none', stroke, 'stroke-width': 1.2, class: 'max',
    }));
  }
  return document(width, height, parts);
}
