export type FigureKind = 'boxplot' | 'bars' | 'value-curves';

/** Declarative description of one output image. */
export interface FigureSpec {
  kind: FigureKind;
  /** Summary CSVs for boxplot/bars, audit JSONs for value-curves. */
  inputs: string[];
  out: string;
  title?: string;
  width?: number;
  height?: number;
}

/** One rendered group: statistics read straight from a summary row. */
export interface SummaryRow {
  method: string;
  evalEnv: string;
  values: Record<string, number>;
}

export interface AuditCurve {
  label: string;
  beliefs: number[];
  values: number[];
}

export interface AuditDoc {
  source: string;
  env: string;
  curves: AuditCurve[];
}

const KINDS: FigureKind[] = ['boxplot', 'bars', 'value-curves'];

export class SpecError extends Error {}

export function parseSpec(doc: unknown): FigureSpec {
  if (typeof doc !== 'object' || doc === null || Array.isArray(doc)) {
    throw new SpecError('figure spec must be a JSON object');
  }
  const d = doc as Record<string, unknown>;
  const kind = d['kind'];
  if (typeof kind !== 'string' || !KINDS.includes(kind as FigureKind)) {
    throw new SpecError(`kind must be one of ${KINDS.join(', ')}, got ${JSON.stringify(kind)}`);
  }
  const inputs = d['inputs'];
  if (!Array.isArray(inputs) || inputs.length === 0 || inputs.some(p => typeof p !== 'string')) {
    throw new SpecError('inputs must be a non-empty array of file paths');
  }
  const out = d['out'];
  if (typeof out !== 'string' || out.length === 0) {
    throw new SpecError('out must be the output SVG path');
  }
  const spec: FigureSpec = { kind: kind as FigureKind, inputs: inputs as string[], out };
  if (d['title'] !== undefined) {
    if (typeof d['title'] !== 'string') throw new SpecError('title must be a string');
    spec.title = d['title'];
  }
  for (const key of ['width', 'height'] as const) {
    const v = d[key];
    if (v !== undefined) {
      if (typeof v !== 'number' || !Number.isFinite(v) || v < 120) {
        throw new SpecError(`${key} must be a number of at least 120 pixels`);
      }
      spec[key] = v;
    }
  }
  return spec;
}
