import { readFileSync } from 'node:fs';
import { pathToFileURL } from 'node:url';

import { renderToFile } from './render.js';
import { SpecError, parseSpec } from './types.js';

const USAGE = 'usage: figures --spec <spec.json>';

export function main(argv: string[]): number {
  let specPath: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === '--spec') {
      specPath = argv[++i];
    } else if (argv[i] === '--help' || argv[i] === '-h') {
      console.log(USAGE);
      return 0;
    } else {
      console.error(`unknown argument ${argv[i]}\n${USAGE}`);
      return 2;
    }
  }
  if (!specPath) {
    console.error(USAGE);
    return 2;
  }
  try {
    const doc = JSON.parse(readFileSync(specPath, 'utf8'));
    const specs = Array.isArray(doc) ? doc : [doc];
    for (const s of specs) {
      const out = renderToFile(parseSpec(s));
      console.log(`wrote ${out}`);
    }
    return 0;
  } catch (err) {
    if (err instanceof SpecError || (err as NodeJS.ErrnoException).code === 'ENOENT') {
      console.error(`error: ${(err as Error).message}`);
      return 1;
    }
    throw err;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exitCode = main(process.argv.slice(2));
}
