/**
 * ONNX export with a parity gate.
 *
 * Models are built and verified in memory first: onnxruntime runs each
 * graph on probe inputs and the outputs must match the native reference
 * projection at cosine >= 0.999. Only after every probe passes are the
 * model files and manifest written, so a failed export leaves nothing
 * behind.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';
import * as ort from 'onnxruntime-node';

import { DevEncoder, loadEncoder } from './encoder';
import { RgbImage } from './images';
import { buildImageModel, buildTextModel, IR_VERSION, OPSET_VERSION } from './onnxproto';
import { fnv1a, mulberry32 } from './rng';

export interface ExportManifest {
  variant: string;
  dim: number;
  image_size: number;
  mean: number[];
  std: number[];
  context_length: number;
  tokenizer: 'bytes';
  preprocessing: string;
  opset: number;
  ir_version: number;
  files: { image_model: string; text_model: string };
}

export interface ParityProbe {
  kind: 'image' | 'text';
  label: string;
  cosine: number;
}

export interface ParityReport {
  threshold: number;
  probes: ParityProbe[];
  worstCosine: number;
}

export interface ExportResult {
  outDir: string;
  files: { imageModel: string; textModel: string; manifest: string };
  manifest: ExportManifest;
  parity: ParityReport;
}

export interface ExportOptions {
  probes?: number;
  minCosine?: number;
}

export class ParityError extends Error {
  readonly report: ParityReport;

  constructor(message: string, report: ParityReport) {
    super(message);
    this.name = 'ParityError';
    this.report = report;
  }
}

export function cosine(a: ArrayLike<number>, b: ArrayLike<number>): number {
  if (a.length !== b.length) throw new Error(`dimension mismatch: ${a.length} vs ${b.length}`);
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i++) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0 || nb <= 0) throw new Error('cosine of a zero vector is undefined');
  return dot / Math.sqrt(na * nb);
}

const PROBE_PROMPTS = [
  'a photo of a dog',
  'a photo of a traffic light',
  'an aerial photograph of a harbor full of fishing boats',
  'x',
  'a photo of a zebra crossing a dusty road at noon',
  'motorcycle',
  'a close-up photo of a ceramic teapot beside two mismatched cups on a wooden table',
  'une photo détaillée d’un café parisien',
];

function probeImage(index: number, size: number): RgbImage {
  const rand = mulberry32(fnv1a(`probe-image/${index}`));
  const width = Math.max(8, Math.round(size * (0.5 + rand() * 1.5)));
  const height = Math.max(8, Math.round(size * (0.5 + rand() * 1.5)));
  const data = new Uint8Array(width * height * 3);
  for (let i = 0; i < data.length; i++) data[i] = Math.floor(rand() * 256);
  return { width, height, data };
}

/**
 * Run both exported graphs against the native reference on probe inputs.
 * Throws ParityError as soon as the full report shows any probe below the
 * threshold; callers must not have written any files yet.
 */
export async function verifyParity(
  encoder: DevEncoder,
  imageModel: Buffer,
  textModel: Buffer,
  options: ExportOptions = {},
): Promise<ParityReport> {
  const probeCount = options.probes ?? 16;
  const threshold = options.minCosine ?? 0.999;
  const imageProbes = Math.ceil(probeCount / 2);
  const textProbes = probeCount - imageProbes;
  const sessionOptions = { logSeverityLevel: 3 as const };
  const imageSession = await ort.InferenceSession.create(imageModel, sessionOptions);
  const textSession = await ort.InferenceSession.create(textModel, sessionOptions);

  const { imageSize, contextLength, dim } = encoder.spec;
  const probes: ParityProbe[] = [];
  for (let i = 0; i < imageProbes; i++) {
    const tensorData = encoder.preprocess(probeImage(i, imageSize));
    const feeds = {
      pixels: new ort.Tensor('float32', tensorData, [1, 3, imageSize, imageSize]),
    };
    const results = await imageSession.run(feeds);
    const exported = results.embedding.data as Float32Array;
    if (exported.length !== dim) {
      throw new Error(`image graph returned ${exported.length} values, expected ${dim}`);
    }
    const native = encoder.embedPixels(tensorData);
    probes.push({ kind: 'image', label: `image probe ${i}`, cosine: cosine(exported, native) });
  }
  for (let i = 0; i < textProbes; i++) {
    const prompt = PROBE_PROMPTS[i % PROBE_PROMPTS.length];
    const ids = encoder.tokenize(prompt);
    const feeds = { tokens: new ort.Tensor('int64', ids, [1, contextLength]) };
    const results = await textSession.run(feeds);
    const exported = results.embedding.data as Float32Array;
    if (exported.length !== dim) {
      throw new Error(`text graph returned ${exported.length} values, expected ${dim}`);
    }
    const native = encoder.embedTokens(ids);
    probes.push({ kind: 'text', label: `text probe ${i}`, cosine: cosine(exported, native) });
  }

  const worstCosine = Math.min(...probes.map((p) => (Number.isFinite(p.cosine) ? p.cosine : -1)));
  const report: ParityReport = { threshold, probes, worstCosine };
  const failed = probes.filter((p) => !(p.cosine >= threshold));
  if (failed.length > 0) {
    const worst = failed.reduce((a, b) => (a.cosine <= b.cosine ? a : b));
    throw new ParityError(
      `parity check failed: ${worst.label} at cosine ${worst.cosine.toFixed(6)} ` +
        `< ${threshold} (${failed.length}/${probes.length} probes below threshold); no files written`,
      report,
    );
  }
  return report;
}

export function buildManifest(encoder: DevEncoder): ExportManifest {
  const { spec } = encoder;
  return {
    variant: spec.name,
    dim: spec.dim,
    image_size: spec.imageSize,
    mean: [...spec.mean],
    std: [...spec.std],
    context_length: spec.contextLength,
    tokenizer: 'bytes',
    preprocessing:
      `bilinear resize to ${spec.imageSize}x${spec.imageSize}, scale 1/255, ` +
      'per-channel (x - mean) / std, NCHW',
    opset: OPSET_VERSION,
    ir_version: IR_VERSION,
    files: { image_model: 'image.onnx', text_model: 'text.onnx' },
  };
}

/** Export a specific encoder instance; parity runs before any file I/O. */
export async function exportEncoder(
  encoder: DevEncoder,
  outDir: string,
  options: ExportOptions = {},
): Promise<ExportResult> {
  const imageModel = buildImageModel(encoder);
  const textModel = buildTextModel(encoder);
  const parity = await verifyParity(encoder, imageModel, textModel, options);

  const manifest = buildManifest(encoder);
  fs.mkdirSync(outDir, { recursive: true });
  const files = {
    imageModel: path.join(outDir, manifest.files.image_model),
    textModel: path.join(outDir, manifest.files.text_model),
    manifest: path.join(outDir, 'manifest.json'),
  };
  fs.writeFileSync(files.imageModel, imageModel);
  fs.writeFileSync(files.textModel, textModel);
  fs.writeFileSync(files.manifest, JSON.stringify(manifest, null, 2) + '\n');
  return { outDir, files, manifest, parity };
}

export async function exportOnnx(
  variant: string,
  outDir: string,
  options: ExportOptions = {},
): Promise<ExportResult> {
  return exportEncoder(loadEncoder(variant), outDir, options);
}
