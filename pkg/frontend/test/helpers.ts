import { readFileSync } from 'node:fs';

// layout contract mirrored independently of src/: margins and 5% padding
export const TOP = 30;
export const BOTTOM = 46;

export interface Row {
  method: string;
  evalEnv: string;
  [col: string]: string | number;
}

/** Plain-text CSV parse (fixtures contain no quoting; CRLF tolerated). */
export function readCsv(path: string): Row[] {
  const lines = readFileSync(path, 'utf8').replace(/\r\n/g, '\n').trim().split('\n');
  const header = lines[0].split(',');
  return lines.slice(1).map(line => {
    const cells = line.split(',');
    const row: Row = { method: '', evalEnv: '' };
    header.forEach((h, i) => {
      if (h === 'method') row.method = cells[i];
      else if (h === 'eval_env') row.evalEnv = cells[i];
      else row[h] = Number(cells[i]);
    });
    return row;
  });
}

export function yMapper(values: number[], height: number): (v: number) => number {
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  const pad = (hi - lo || 1) * 0.05;
  lo -= pad;
  hi += pad;
  if (hi === lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const top = TOP;
  const bottom = height - BOTTOM;
  return v => bottom + ((v - lo) / (hi - lo)) * (top - bottom);
}

export interface Elem {
  name: string;
  attrs: Record<string, string>;
}

/** All elements of one tag name with a given class, in document order. */
export function elements(svg: string, name: string, cls: string): Elem[] {
  const out: Elem[] = [];
  const re = new RegExp(`<${name}\\b[^>]*`, 'g');
  for (const m of svg.match(re) ?? []) {
    const attrs: Record<string, string> = {};
    for (const a of m.matchAll(/([\w-]+)="([^"]*)"/g)) {
      attrs[a[1]] = a[2];
    }
    if (attrs['class'] === cls) {
      out.push({ name, attrs });
    }
  }
  return out;
}

export function num(e: Elem, attr: string): number {
  const v = Number(e.attrs[attr]);
  if (!Number.isFinite(v)) {
    throw new Error(`attribute ${attr} missing or non-numeric on <${e.name}>`);
  }
  return v;
}
