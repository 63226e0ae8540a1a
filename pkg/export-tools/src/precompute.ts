/**
 * Precompute an embedding store for a dataset, proposal list and
 * vocabulary.
 *
 * Emits one "img:" record per image, one "box:" record per proposal line
 * and one "txt:" record per category, in that order, all through the same
 * encoder. Text records are keyed by the bare category name while the
 * vector embeds the templated prompt; that is what the consumer looks up.
 */

import * as fs from 'node:fs';

import { DevEncoder, loadEncoder } from './encoder';
import { cropBox, discoverImages, loadPng, RgbImage } from './images';
import { boxKey, imageKey, PcebRecord, textKey, writePceb } from './pceb';

export const DEFAULT_PROMPT_TEMPLATE = 'a photo of a {}';

export interface Vocabulary {
  names: string[];
  promptTemplate: string;
}

export interface ProposalLine {
  imageId: string;
  box: [number, number, number, number];
}

export interface PrecomputeOptions {
  imagesDir: string;
  /** Proposals JSONL; omit for image and text records only. */
  proposalsPath?: string;
  vocabPath: string;
  outPath: string;
  variant?: string;
  /** Injected encoder wins over `variant`. */
  encoder?: DevEncoder;
}

export interface PrecomputeSummary {
  outPath: string;
  dim: number;
  images: number;
  boxes: number;
  texts: number;
  records: number;
}

/**
 * Load a vocabulary from JSON ({"names": [...], "prompt_template"?: ...})
 * or a plain text file with one category per line.
 */
export function loadVocabulary(path: string): Vocabulary {
  const text = fs.readFileSync(path, 'utf8');
  let names: string[];
  let promptTemplate = DEFAULT_PROMPT_TEMPLATE;
  if (path.toLowerCase().endsWith('.json')) {
    let data: unknown;
    try {
      data = JSON.parse(text);
    } catch (err) {
      throw new Error(`invalid vocabulary JSON in ${path}: ${(err as Error).message}`);
    }
    const obj = data as { names?: unknown; prompt_template?: unknown };
    if (typeof data !== 'object' || data === null || !Array.isArray(obj.names)) {
      throw new Error(`vocabulary JSON must be an object with "names": ${path}`);
    }
    names = obj.names.map(String);
    if (typeof obj.prompt_template === 'string' && obj.prompt_template) {
      promptTemplate = obj.prompt_template;
    }
  } else {
    names = text
      .split('\n')
      .map((line) => line.trim())
      .filter((line) => line.length > 0);
  }
  if (names.length < 2) throw new Error(`vocabulary needs at least 2 categories, got ${names.length}`);
  const dupes = names.filter((n, i) => names.indexOf(n) !== i);
  if (dupes.length > 0) throw new Error(`duplicate category names: ${[...new Set(dupes)].sort().join(', ')}`);
  const placeholders = promptTemplate.split('{}').length - 1;
  if (placeholders !== 1) {
    throw new Error(`prompt template needs exactly one '{}' placeholder: '${promptTemplate}'`);
  }
  return { names, promptTemplate };
}

export function applyTemplate(template: string, name: string): string {
  return template.replace('{}', name);
}

export function readProposals(path: string): ProposalLine[] {
  const out: ProposalLine[] = [];
  const lines = fs.readFileSync(path, 'utf8').split('\n');
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let parsed: Record<string, unknown>;
    try {
      parsed = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}:${i + 1}: invalid JSON: ${(err as Error).message}`);
    }
    const imageId = parsed.image_id;
    if (typeof imageId !== 'string' || !imageId) {
      throw new Error(`${path}:${i + 1}: missing or invalid "image_id"`);
    }
    const coords: number[] = [];
    for (const field of ['x0', 'y0', 'x1', 'y1']) {
      const value = parsed[field];
      if (typeof value !== 'number' || !Number.isFinite(value)) {
        throw new Error(`${path}:${i + 1}: missing or non-finite "${field}"`);
      }
      coords.push(value);
    }
    out.push({ imageId, box: [coords[0], coords[1], coords[2], coords[3]] });
  }
  return out;
}

function toFloat32(vector: Float64Array): Float32Array {
  const out = new Float32Array(vector.length);
  for (let i = 0; i < vector.length; i++) out[i] = Math.fround(vector[i]);
  return out;
}

export function precomputeEmbeddings(options: PrecomputeOptions): PrecomputeSummary {
  const encoder = options.encoder ?? loadEncoder(options.variant ?? 'dev-tiny');
  const vocab = loadVocabulary(options.vocabPath);
  const images = discoverImages(options.imagesDir);
  if (images.length === 0) throw new Error(`no PNG images found in ${options.imagesDir}`);
  const proposals = options.proposalsPath ? readProposals(options.proposalsPath) : [];

  const byImage = new Map<string, ProposalLine[]>();
  for (const proposal of proposals) {
    const bucket = byImage.get(proposal.imageId);
    if (bucket) bucket.push(proposal);
    else byImage.set(proposal.imageId, [proposal]);
  }
  const known = new Set(images.map((entry) => entry.imageId));
  for (const id of byImage.keys()) {
    if (!known.has(id)) {
      throw new Error(`proposals reference image '${id}' not present in ${options.imagesDir}`);
    }
  }

  const records: PcebRecord[] = [];
  let boxes = 0;
  for (const entry of images) {
    const image: RgbImage = loadPng(entry.path);
    records.push({ key: imageKey(entry.imageId), vector: toFloat32(encoder.embedImage(image)) });
    for (const proposal of byImage.get(entry.imageId) ?? []) {
      records.push({
        key: boxKey(entry.imageId, proposal.box),
        vector: toFloat32(encoder.embedImage(cropBox(image, proposal.box))),
      });
      boxes += 1;
    }
  }
  for (const name of vocab.names) {
    records.push({
      key: textKey(name),
      vector: toFloat32(encoder.embedText(applyTemplate(vocab.promptTemplate, name))),
    });
  }

  // writePceb rejects colliding keys, listing every duplicate
  writePceb(options.outPath, records, encoder.spec.dim);
  return {
    outPath: options.outPath,
    dim: encoder.spec.dim,
    images: images.length,
    boxes,
    texts: vocab.names.length,
    records: records.length,
  };
}
