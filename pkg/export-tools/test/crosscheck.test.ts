import { afterAll, beforeAll, describe, expect, test } from 'vitest';
import { spawnSync } from 'node:child_process';
import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';

import { loadEncoder } from '../src/encoder';
import { cosine } from '../src/exportOnnx';
import { cropBox, loadPng } from '../src/images';
import { boxKey, imageKey, textKey } from '../src/pceb';
import { applyTemplate, DEFAULT_PROMPT_TEMPLATE, precomputeEmbeddings } from '../src/precompute';
import { buildDataset, Dataset } from './helpers';

/**
 * End-to-end parity against the consumer toolkit: the Python loader reads
 * the PCEB file this package wrote and must reproduce the native cosine
 * similarities within 1e-3, and its provider must find region/text records
 * through its own key construction.
 */

function havePropkit(): boolean {
  const probe = spawnSync('python3', ['-c', 'import propkit'], { encoding: 'utf8' });
  return probe.error === undefined && probe.status === 0;
}

const PYTHON_SCRIPT = `
import itertools
import json
import sys

from propkit.embeddings import CategoryVocabulary, cosine_similarity, load_embedding_file
from propkit.geometry import BBox
from propkit.images import ImageRef
from propkit.providers import PrecomputedProvider

config = json.load(open(sys.argv[1]))
meta, vectors = load_embedding_file(config["path"])
keys = sorted(vectors)
cosines = {}
for a, b in itertools.combinations(keys, 2):
    cosines[a + "|" + b] = cosine_similarity(vectors[a], vectors[b])

provider = PrecomputedProvider.from_file(config["path"])
image = ImageRef(config["image_id"], config["width"], config["height"])
region = provider.embed_region(image, BBox(*config["box"]))
whole = provider.embed_image(image)
texts = provider.embed_texts(CategoryVocabulary(tuple(config["names"])))

print(json.dumps({
    "meta": meta,
    "keys": keys,
    "cosines": cosines,
    "region": [float(v) for v in region],
    "whole": [float(v) for v in whole],
    "texts": [[float(v) for v in t] for t in texts],
}))
`;

interface PythonReport {
  meta: { version: number; dim: number; count: number };
  keys: string[];
  cosines: Record<string, number>;
  region: number[];
  whole: number[];
  texts: number[][];
}

const enabled = havePropkit();
const scratch = fs.mkdtempSync(path.join(os.tmpdir(), 'export-tools-x-'));
afterAll(() => fs.rmSync(scratch, { recursive: true, force: true }));

describe.skipIf(!enabled)('consumer toolkit cross-check', () => {
  let dataset: Dataset;
  let report: PythonReport;
  let native: Map<string, Float64Array>;
  const checkedBox: [number, number, number, number] = [0.125, 0.005, 14.675, 11.375];

  beforeAll(() => {
    dataset = buildDataset(scratch);
    const outPath = path.join(scratch, 'store.pceb');
    const summary = precomputeEmbeddings({
      imagesDir: dataset.imagesDir,
      proposalsPath: dataset.proposalsPath,
      vocabPath: dataset.vocabPath,
      outPath,
      variant: 'dev-tiny',
    });
    expect(summary.records).toBe(13);

    // native float64 reference for every record, same code paths
    const encoder = loadEncoder('dev-tiny');
    native = new Map();
    for (const imageId of ['a', 'b']) {
      const image = loadPng(path.join(dataset.imagesDir, `${imageId}.png`));
      native.set(imageKey(imageId), encoder.embedImage(image));
      for (const box of dataset.proposals[imageId]) {
        native.set(boxKey(imageId, box), encoder.embedImage(cropBox(image, box)));
      }
    }
    for (const name of dataset.names) {
      native.set(textKey(name), encoder.embedText(applyTemplate(DEFAULT_PROMPT_TEMPLATE, name)));
    }

    const scriptPath = path.join(scratch, 'crosscheck.py');
    fs.writeFileSync(scriptPath, PYTHON_SCRIPT);
    const configPath = path.join(scratch, 'crosscheck.json');
    fs.writeFileSync(
      configPath,
      JSON.stringify({
        path: outPath,
        image_id: 'a',
        width: 16,
        height: 12,
        box: checkedBox,
        names: dataset.names,
      }),
    );
    const run = spawnSync('python3', [scriptPath, configPath], {
      encoding: 'utf8',
      maxBuffer: 16 * 1024 * 1024,
    });
    expect(run.error).toBeUndefined();
    expect(run.status, run.stderr).toBe(0);
    report = JSON.parse(run.stdout);
  });

  test('the consumer loads every record', () => {
    expect(report.meta).toEqual({ version: 1, dim: 32, count: 13 });
    expect(report.keys).toEqual([...native.keys()].sort());
  });

  test('cosine similarities reproduce within 1e-3', () => {
    const keys = [...native.keys()].sort();
    let worst = 0;
    let pairs = 0;
    for (let i = 0; i < keys.length; i++) {
      for (let j = i + 1; j < keys.length; j++) {
        const label = `${keys[i]}|${keys[j]}`;
        const loaded = report.cosines[label];
        expect(loaded, label).toBeTypeOf('number');
        const reference = cosine(native.get(keys[i])!, native.get(keys[j])!);
        worst = Math.max(worst, Math.abs(loaded - reference));
        pairs += 1;
      }
    }
    expect(pairs).toBe(78);
    expect(worst).toBeLessThan(1e-3);
  });

  test('provider lookups resolve through the consumer key builders', () => {
    // the box coordinates exercise the two-decimal tie cases; the Python
    // side builds its own key from the raw floats
    const region = native.get(boxKey('a', checkedBox))!;
    expect(report.region.length).toBe(region.length);
    for (let d = 0; d < region.length; d++) {
      expect(Math.abs(report.region[d] - region[d])).toBeLessThan(1e-4 * (1 + Math.abs(region[d])));
    }
    const whole = native.get(imageKey('a'))!;
    for (let d = 0; d < whole.length; d++) {
      expect(Math.abs(report.whole[d] - whole[d])).toBeLessThan(1e-4 * (1 + Math.abs(whole[d])));
    }
    expect(report.texts.length).toBe(dataset.names.length);
    for (let t = 0; t < report.texts.length; t++) {
      const nativeText = native.get(textKey(dataset.names[t]))!;
      for (let d = 0; d < nativeText.length; d++) {
        expect(Math.abs(report.texts[t][d] - nativeText[d])).toBeLessThan(
          1e-4 * (1 + Math.abs(nativeText[d])),
        );
      }
    }
  });
});

test.skipIf(enabled)('consumer toolkit unavailable, cross-check skipped', () => {
  console.log('python3 with the consumer toolkit not found; cross-check skipped');
});
