#!/usr/bin/env node
/** plots <figure_spec.toml> [...more specs]
 *
 * Renders each figure spec to its configured SVG output path (resolved
 * against the spec file's directory).
 */
import { writeFileSync } from 'node:fs';
import { resolve } from 'node:path';

import { loadSpec, renderSpec } from './figspec.js';

export function main(argv: string[]): number {
  if (argv.length === 0) {
    console.error('usage: plots <figure_spec.toml> [...more specs]');
    return 2;
  }
  for (const path of argv) {
    let spec;
    try {
      spec = loadSpec(path);
      const svg = renderSpec(spec);
      const out = resolve(spec.baseDir, spec.output);
      writeFileSync(out, svg);
      console.log(`${path} -> ${out}`);
    } catch (err) {
      console.error(`error: ${path}: ${(err as Error).message}`);
      return 1;
    }
  }
  return 0;
}

process.exitCode = main(process.argv.slice(2));
