import { LinearScale } from './scale.js';
import { SpecError, SummaryRow } from './types.js';
import { color, tag, text } from './svg.js';

export const MARGIN = { top: 30, right: 16, bottom: 46, left: 56 };

/** Group slots: one column per eval env, one slot per method inside it. */
export class PanelLayout {
  readonly envs: string[];
  readonly methods: string[];
  readonly left: number;
  readonly width: number;

  constructor(rows: SummaryRow[], totalWidth: number) {
    this.envs = [...new Set(rows.map(r => r.evalEnv))];
    this.methods = [...new Set(rows.map(r => r.method))];
    if (this.envs.length === 0) {
      throw new SpecError('no groups to draw');
    }
    this.left = MARGIN.left;
    this.width = totalWidth - MARGIN.left - MARGIN.right;
  }

  groupWidth(): number {
    return this.width / this.envs.length;
  }

  slotWidth(): number {
    return this.groupWidth() / this.methods.length;
  }

  /** Horizontal center of one (env, method) slot. */
  centerX(env: string, method: string): number {
    const gi = this.envs.indexOf(env);
    const mi = this.methods.indexOf(method);
    return this.left + gi * this.groupWidth() + (mi + 0.5) * this.slotWidth();
  }

  methodColor(method: string): string {
    return color(this.methods.indexOf(method));
  }
}

export function yAxis(scale: LinearScale, left: number, right: number): string[] {
  const parts: string[] = [];
  parts.push(tag('line', {
    x1: left, y1: scale.top, x2: left, y2: scale.bottom,
    stroke: '#333', 'stroke-width': 1, class: 'axis',
  }));
  for (const v of scale.ticks()) {
    const y = scale.y(v);
    parts.push(tag('line', {
      x1: left - 4, y1: y, x2: right, y2: y,
      stroke: '#ddd', 'stroke-width': 1, class: 'grid',
    }));
    parts.push(text(left - 7, y + 3.5, trimTick(v), {
      'text-anchor': 'end', class: 'tick', fill: '#333',
    }));
  }
  return parts;
}

function trimTick(v: number): string {
  const s = v.toPrecision(10);
  return s.includes('.') ? s.replace(/0+$/, '').replace(/\.$/, '') : s;
}

export function xLabels(layout: PanelLayout, y: number): string[] {
  return layout.envs.map((env, gi) => {
    const cx = layout.left + (gi + 0.5) * layout.groupWidth();
    return text(cx, y, env, { 'text-anchor': 'middle', class: 'group-label', fill: '#333' });
  });
}

export function legend(layout: PanelLayout, rightEdge: number): string[] {
  const parts: string[] = [];
  let x = rightEdge;
  for (let i = layout.methods.length - 1; i >= 0; i--) {
    const label = layout.methods[i];
    x -= 9 * label.length + 26;
    parts.push(tag('rect', {
      x, y: 8, width: 10, height: 10,
      fill: layout.methodColor(label), class: 'legend-swatch',
    }));
    parts.push(text(x + 14, 17, label, { class: 'legend-label', fill: '#333' }));
  }
  return parts;
}

export function title(s: string | undefined, width: number): string[] {
  if (!s) return [];
  return [text(MARGIN.left, 18, s, { 'font-size': 13, 'font-weight': 'bold', class: 'title', fill: '#111' })];
}
