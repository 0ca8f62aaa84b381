import { readFileSync } from 'node:fs';
import { basename } from 'node:path';

import { LinearScale, paddedDomain } from './scale.js';
import { MARGIN } from './layout.js';
import { AuditCurve, AuditDoc, SpecError } from './types.js';
import { color, document, fmt, tag, text } from './svg.js';

export function loadAudit(path: string): AuditDoc {
  let doc: unknown;
  try {
    doc = JSON.parse(readFileSync(path, 'utf8'));
  } catch (err) {
    throw new SpecError(`${path}: malformed JSON (${(err as Error).message})`);
  }
  const d = doc as Record<string, unknown>;
  if (d['format'] !== 'convexity-audit') {
    throw new SpecError(`${path}: not a convexity audit document`);
  }
  const curves = d['curves'];
  if (!Array.isArray(curves) || curves.length === 0) {
    throw new SpecError(`${path}: audit has no value curves`);
  }
  for (const c of curves as AuditCurve[]) {
    if (!Array.isArray(c.beliefs) || !Array.isArray(c.values) ||
        c.beliefs.length !== c.values.length || c.beliefs.length < 2) {
      throw new SpecError(`${path}: curve ${JSON.stringify(c.label)} is not a belief grid`);
    }
  }
  return {
    source: basename(path).replace(/\.json$/, ''),
    env: String(d['env']),
    curves: curves as AuditCurve[],
  };
}

/**
 * Value-stream sections over one belief coordinate, one polyline per curve
 * per audit document. Visually convex lines mean the enforcement held.
 */
export function renderCurves(docs: AuditDoc[], width: number, height: number,
                             heading?: string): string {
  const all = docs.flatMap(d => d.curves.flatMap(c => c.values));
  const [lo, hi] = paddedDomain(all);
  const scale = new LinearScale(lo, hi, MARGIN.top, height - MARGIN.bottom);
  const left = MARGIN.left;
  const right = width - MARGIN.right;
  const xOf = (b: number) => left + b * (right - left);

  const parts: string[] = [];
  if (heading) {
    parts.push(text(left, 18, heading, { 'font-size': 13, 'font-weight': 'bold', class: 'title', fill: '#111' }));
  }
  parts.push(tag('line', { x1: left, y1: scale.top, x2: left, y2: scale.bottom, stroke: '#333', class: 'axis' }));
  for (const v of scale.ticks()) {
    parts.push(tag('line', {
      x1: left - 4, y1: scale.y(v), x2: right, y2: scale.y(v),
      stroke: '#ddd', class: 'grid',
    }));
    parts.push(text(left - 7, scale.y(v) + 3.5, String(v), { 'text-anchor': 'end', class: 'tick', fill: '#333' }));
  }
  for (const b of [0, 0.25, 0.5, 0.75, 1]) {
    parts.push(text(xOf(b), height - MARGIN.bottom + 18, b.toString(), {
      'text-anchor': 'middle', class: 'btick', fill: '#333',
    }));
  }
  parts.push(text((left + right) / 2, height - 10, 'belief', { 'text-anchor': 'middle', class: 'xlabel', fill: '#333' }));

  let i = 0;
  let ly = 8;
  for (const doc of docs) {
    for (const curve of doc.curves) {
      const pts = curve.beliefs.map((b, k) => `${fmt(xOf(b))},${fmt(scale.y(curve.values[k]))}`);
      parts.push(tag('polyline', {
        points: pts.join(' '),
        fill: 'none', stroke: color(i), 'stroke-width': 1.6, class: 'curve',
      }));
      const label = docs.length > 1 ? `${doc.source}: ${curve.label}` : curve.label;
      parts.push(tag('rect', { x: right - 150, y: ly, width: 10, height: 3, fill: color(i), class: 'legend-swatch' }));
      parts.push(text(right - 136, ly + 5, label, { class: 'legend-label', fill: '#333' }));
      ly += 14;
      i += 1;
    }
  }
  return document(width, height, parts);
}
