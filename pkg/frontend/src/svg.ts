/** Minimal SVG text assembly; fixed 2-decimal coordinates keep output stable. */

export type Attrs = Record<string, string | number>;

export function fmt(v: number): string {
  const r = Math.round(v * 100) / 100;
  // avoid "-0" so identical geometry always serializes identically
  return (Object.is(r, -0) ? 0 : r).toString();
}

export function tag(name: string, attrs: Attrs, body = ''): string {
  const parts = Object.entries(attrs).map(
    ([k, v]) => `${k}="${typeof v === 'number' ? fmt(v) : v}"`);
  const open = `<${name}${parts.length ? ' ' + parts.join(' ') : ''}`;
  return body === '' ? `${open}/>` : `${open}>${body}</${name}>`;
}

export function text(x: number, y: number, s: string, attrs: Attrs = {}): string {
  return tag('text', { x, y, 'font-family': 'sans-serif', 'font-size': 11, ...attrs }, escapeXml(s));
}

export function escapeXml(s: string): string {
  return s.replace(/[&<>"]/g, ch =>
    ch === '&' ? '&amp;' : ch === '<' ? '&lt;' : ch === '>' ? '&gt;' : '&quot;');
}

export function document(width: number, height: number, body: string[]): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${fmt(width)}" height="${fmt(height)}" viewBox="0 0 ${fmt(width)} ${fmt(height)}">`,
    tag('rect', { x: 0, y: 0, width, height, fill: 'white' }),
    ...body,
    '</svg>',
    '',
  ].join('\n');
}

export const PALETTE = ['#4c72b0', '#dd8452', '#55a868', '#c44e52', '#8172b3', '#937860'];

export function color(i: number): string {
  return PALETTE[i % PALETTE.length];
}
