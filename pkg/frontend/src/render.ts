import { mkdirSync, writeFileSync } from 'node:fs';
import { dirname } from 'node:path';

import { BAR_COLUMNS, renderBars } from './bars.js';
import { BOX_COLUMNS, renderBoxplot } from './boxplot.js';
import { loadAudit, renderCurves } from './curves.js';
import { loadSummaryRows } from './csv.js';
import { FigureSpec, SpecError, SummaryRow } from './types.js';

const DEFAULT_WIDTH = 640;
const DEFAULT_HEIGHT = 420;

function summaryInputs(spec: FigureSpec, columns: string[]): SummaryRow[] {
  const rows = spec.inputs.flatMap(p => loadSummaryRows(p, columns));
  return rows;
}

export function renderSpec(spec: FigureSpec): string {
  const w = spec.width ?? DEFAULT_WIDTH;
  const h = spec.height ?? DEFAULT_HEIGHT;
  switch (spec.kind) {
    case 'boxplot':
      return renderBoxplot(summaryInputs(spec, BOX_COLUMNS), w, h, spec.title);
    case 'bars':
      return renderBars(summaryInputs(spec, BAR_COLUMNS), w, h, spec.title);
    case 'value-curves':
      return renderCurves(spec.inputs.map(loadAudit), w, h, spec.title);
    default:
      throw new SpecError(`unknown figure kind ${JSON.stringify(spec.kind)}`);
  }
}

export function renderToFile(spec: FigureSpec): string {
  const svg = renderSpec(spec);
  mkdirSync(dirname(spec.out), { recursive: true });
  writeFileSync(spec.out, svg);
  return spec.out;
}
