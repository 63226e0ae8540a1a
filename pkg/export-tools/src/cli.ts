#!/usr/bin/env node
/** Command line front end: `export-onnx` and `precompute`. */

import { listVariants } from './encoder';
import { exportOnnx } from './exportOnnx';
import { precomputeEmbeddings } from './precompute';

const USAGE = `usage:
  export-tools export-onnx --variant NAME --out DIR
  export-tools precompute --images DIR --proposals FILE --vocab FILE --out FILE [--variant NAME]

variants: ${listVariants().join(', ')}`;

function parseFlags(argv: string[], allowed: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    if (!flag.startsWith('--') || !allowed.includes(flag.slice(2))) {
      throw new UsageError(`unknown flag '${flag}'`);
    }
    const value = argv[i + 1];
    if (value === undefined || value.startsWith('--')) {
      throw new UsageError(`flag '${flag}' needs a value`);
    }
    if (flags.has(flag.slice(2))) throw new UsageError(`flag '${flag}' given twice`);
    flags.set(flag.slice(2), value);
  }
  return flags;
}

function required(flags: Map<string, string>, name: string): string {
  const value = flags.get(name);
  if (value === undefined) throw new UsageError(`missing required flag '--${name}'`);
  return value;
}

class UsageError extends Error {}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  if (!command || command === '--help' || command === '-h' || command === 'help') {
    console.log(USAGE);
    return command ? 0 : 1;
  }
  if (command === 'export-onnx') {
    const flags = parseFlags(rest, ['variant', 'out']);
    const result = await exportOnnx(required(flags, 'variant'), required(flags, 'out'));
    console.log(
      `exported ${result.manifest.variant} (dim ${result.manifest.dim}) to ${result.outDir}`,
    );
    console.log(
      `parity: ${result.parity.probes.length} probes, worst cosine ` +
        `${result.parity.worstCosine.toFixed(6)} (threshold ${result.parity.threshold})`,
    );
    return 0;
  }
  if (command === 'precompute') {
    const flags = parseFlags(rest, ['images', 'proposals', 'vocab', 'out', 'variant']);
    const summary = precomputeEmbeddings({
      imagesDir: required(flags, 'images'),
      proposalsPath: flags.get('proposals'),
      vocabPath: required(flags, 'vocab'),
      outPath: required(flags, 'out'),
      variant: flags.get('variant'),
    });
    console.log(
      `wrote ${summary.records} records (dim ${summary.dim}) to ${summary.outPath}: ` +
        `${summary.images} images, ${summary.boxes} boxes, ${summary.texts} categories`,
    );
    return 0;
  }
  throw new UsageError(`unknown command '${command}'`);
}

main()
  .then((code) => {
    process.exitCode = code;
  })
  .catch((err) => {
    if (err instanceof UsageError) {
      console.error(`error: ${err.message}`);
      console.error(USAGE);
      process.exitCode = 1;
    } else {
      console.error(`error: ${err instanceof Error ? err.message : err}`);
      process.exitCode = 2;
    }
  });
