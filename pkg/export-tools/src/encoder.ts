/**
 * Deterministic development encoders standing in for pretrained weights.
 *
 * Real checkpoints cannot be downloaded in the build environment, so the
 * dev variants derive fixed linear projection weights from the variant
 * name. The image path consumes the same normalized NCHW tensor the
 * toolkit's ONNX backend feeds its models, and the text path the same
 * byte-token ids (UTF-8 byte + 1, zero padded), so exported graphs slot
 * straight into that backend.
 */

import { RgbImage, resizeBilinear } from './images';
import { fnv1a, normalArray } from './rng';

export interface VariantSpec {
  name: string;
  dim: number;
  imageSize: number;
  mean: readonly [number, number, number];
  std: readonly [number, number, number];
  contextLength: number;
  /** True when the variant needs a downloaded checkpoint. */
  pretrained: boolean;
}

const CLIP_MEAN = [0.48145466, 0.4578275, 0.40821073] as const;
const CLIP_STD = [0.26862954, 0.26130258, 0.27577711] as const;

const VARIANTS: Record<string, VariantSpec> = {
  'dev-tiny': {
    name: 'dev-tiny',
    dim: 32,
    imageSize: 32,
    mean: [0, 0, 0],
    std: [1, 1, 1],
    contextLength: 77,
    pretrained: false,
  },
  'dev-base': {
    name: 'dev-base',
    dim: 64,
    imageSize: 48,
    mean: CLIP_MEAN,
    std: CLIP_STD,
    contextLength: 77,
    pretrained: false,
  },
  'vit-b-32': {
    name: 'vit-b-32',
    dim: 512,
    imageSize: 224,
    mean: CLIP_MEAN,
    std: CLIP_STD,
    contextLength: 77,
    pretrained: true,
  },
  'vit-b-16': {
    name: 'vit-b-16',
    dim: 512,
    imageSize: 224,
    mean: CLIP_MEAN,
    std: CLIP_STD,
    contextLength: 77,
    pretrained: true,
  },
};

export function listVariants(): string[] {
  return Object.keys(VARIANTS).sort();
}

export class DevEncoder {
  readonly spec: VariantSpec;
  /** Row-major [3*S*S, dim]. */
  readonly imageWeights: Float32Array;
  /** Row-major [contextLength, dim]. */
  readonly textWeights: Float32Array;

  constructor(spec: VariantSpec) {
    this.spec = spec;
    const pixels = 3 * spec.imageSize * spec.imageSize;
    this.imageWeights = normalArray(
      fnv1a(`${spec.name}/image`),
      pixels * spec.dim,
      1 / Math.sqrt(pixels),
    );
    this.textWeights = normalArray(
      fnv1a(`${spec.name}/text`),
      spec.contextLength * spec.dim,
      1 / Math.sqrt(spec.contextLength),
    );
  }

  /** Resize to SxS, scale to [0,1], normalize per channel, emit NCHW. */
  preprocess(image: RgbImage): Float32Array {
    const size = this.spec.imageSize;
    const resized = resizeBilinear(image, size);
    const plane = size * size;
    const out = new Float32Array(3 * plane);
    for (let c = 0; c < 3; c++) {
      const mean = this.spec.mean[c];
      const std = this.spec.std[c];
      for (let p = 0; p < plane; p++) {
        out[c * plane + p] = Math.fround((resized[p * 3 + c] / 255 - mean) / std);
      }
    }
    return out;
  }

  /** UTF-8 bytes shifted by one, zero padded or truncated to the context length. */
  tokenize(prompt: string): BigInt64Array {
    const ids = new BigInt64Array(this.spec.contextLength);
    const raw = Buffer.from(prompt, 'utf8');
    const used = Math.min(raw.length, this.spec.contextLength);
    for (let i = 0; i < used; i++) ids[i] = BigInt(raw[i] + 1);
    return ids;
  }

  /** Reference projection; the exported image graph must reproduce this. */
  embedPixels(nchw: Float32Array): Float64Array {
    const { dim } = this.spec;
    const rows = this.imageWeights.length / dim;
    if (nchw.length !== rows) {
      throw new Error(`expected ${rows} input values, got ${nchw.length}`);
    }
    const out = new Float64Array(dim);
    for (let i = 0; i < rows; i++) {
      const x = nchw[i];
      if (x === 0) continue;
      const base = i * dim;
      for (let d = 0; d < dim; d++) out[d] += x * this.imageWeights[base + d];
    }
    return out;
  }

  embedImage(image: RgbImage): Float64Array {
    return this.embedPixels(this.preprocess(image));
  }

  /** Reference projection; the exported text graph must reproduce this. */
  embedTokens(ids: BigInt64Array): Float64Array {
    const { dim, contextLength } = this.spec;
    if (ids.length !== contextLength) {
      throw new Error(`expected ${contextLength} token ids, got ${ids.length}`);
    }
    const out = new Float64Array(dim);
    for (let i = 0; i < contextLength; i++) {
      const x = Number(ids[i]);
      if (x === 0) continue;
      const base = i * dim;
      for (let d = 0; d < dim; d++) out[d] += x * this.textWeights[base + d];
    }
    return out;
  }

  embedText(prompt: string): Float64Array {
    return this.embedTokens(this.tokenize(prompt));
  }
}

export function loadEncoder(variant: string): DevEncoder {
  const spec = VARIANTS[variant];
  if (!spec) {
    throw new Error(`unknown variant '${variant}', expected one of: ${listVariants().join(', ')}`);
  }
  if (spec.pretrained) {
    throw new Error(
      `variant '${variant}': pretrained weights not obtainable in this environment, ` +
        `use a dev variant (${listVariants().filter((v) => !VARIANTS[v].pretrained).join(', ')})`,
    );
  }
  return new DevEncoder(spec);
}
