/** PNG loading, cropping and resizing for the embedding precompute path. */

import * as fs from 'node:fs';
import * as path from 'node:path';
import { PNG } from 'pngjs';

export interface RgbImage {
  width: number;
  height: number;
  /** Row-major RGB, 3 bytes per pixel. */
  data: Uint8Array;
}

export function decodePng(buffer: Buffer): RgbImage {
  const png = PNG.sync.read(buffer);
  const pixels = png.width * png.height;
  const data = new Uint8Array(pixels * 3);
  for (let i = 0; i < pixels; i++) {
    data[i * 3] = png.data[i * 4];
    data[i * 3 + 1] = png.data[i * 4 + 1];
    data[i * 3 + 2] = png.data[i * 4 + 2];
  }
  return { width: png.width, height: png.height, data };
}

export function loadPng(filePath: string): RgbImage {
  return decodePng(fs.readFileSync(filePath));
}

export function encodePng(image: RgbImage): Buffer {
  const png = new PNG({ width: image.width, height: image.height });
  const pixels = image.width * image.height;
  for (let i = 0; i < pixels; i++) {
    png.data[i * 4] = image.data[i * 3];
    png.data[i * 4 + 1] = image.data[i * 3 + 1];
    png.data[i * 4 + 2] = image.data[i * 3 + 2];
    png.data[i * 4 + 3] = 255;
  }
  return PNG.sync.write(png);
}

/** PNG files in a directory, sorted by name; the id is the file stem. */
export function discoverImages(directory: string): Array<{ imageId: string; path: string }> {
  return fs
    .readdirSync(directory)
    .filter((name) => name.toLowerCase().endsWith('.png'))
    .sort()
    .map((name) => ({ imageId: name.slice(0, -4), path: path.join(directory, name) }));
}

/**
 * Integer pixel crop of the clamped box, partial pixels included. Matches
 * the consumer's crop rule: clamp corners into the image, reject boxes
 * whose clamped extent falls below one pixel on either side, then take
 * floor/ceil bounds.
 */
export function cropBox(
  image: RgbImage,
  box: readonly [number, number, number, number],
): RgbImage {
  const clamp = (v: number, hi: number) => Math.min(Math.max(v, 0), hi);
  const cx0 = clamp(box[0], image.width);
  const cx1 = clamp(box[2], image.width);
  const cy0 = clamp(box[1], image.height);
  const cy1 = clamp(box[3], image.height);
  if (!(cx0 < cx1 && cy0 < cy1)) {
    throw new Error(`box [${box.join(', ')}] lies outside the ${image.width}x${image.height} image`);
  }
  if (cx1 - cx0 < 1 || cy1 - cy0 < 1) {
    throw new Error(`crop [${box.join(', ')}] is below 1px on a side`);
  }
  const x0 = Math.floor(cx0);
  const y0 = Math.floor(cy0);
  const x1 = Math.min(Math.ceil(cx1), image.width);
  const y1 = Math.min(Math.ceil(cy1), image.height);
  const w = x1 - x0;
  const h = y1 - y0;
  const data = new Uint8Array(w * h * 3);
  for (let y = 0; y < h; y++) {
    const src = ((y0 + y) * image.width + x0) * 3;
    data.set(image.data.subarray(src, src + w * 3), y * w * 3);
  }
  return { width: w, height: h, data };
}

function axisWeights(outSize: number, inSize: number): Array<{ start: number; weights: number[] }> {
  const scale = inSize / outSize;
  const filterScale = Math.max(scale, 1);
  const out: Array<{ start: number; weights: number[] }> = [];
  for (let i = 0; i < outSize; i++) {
    const center = (i + 0.5) * scale;
    const lo = Math.max(0, Math.floor(center - filterScale));
    const hi = Math.min(inSize, Math.ceil(center + filterScale));
    const weights: number[] = [];
    let total = 0;
    for (let j = lo; j < hi; j++) {
      const w = Math.max(0, 1 - Math.abs((j + 0.5 - center) / filterScale));
      weights.push(w);
      total += w;
    }
    for (let j = 0; j < weights.length; j++) weights[j] /= total;
    out.push({ start: lo, weights });
  }
  return out;
}

/**
 * Separable triangle-filter resize to size x size, aspect ratio not
 * preserved. Float arithmetic throughout; returns per-pixel RGB floats in
 * [0, 255].
 */
export function resizeBilinear(image: RgbImage, size: number): Float64Array {
  const horizontal = axisWeights(size, image.width);
  const vertical = axisWeights(size, image.height);
  // horizontal pass: image.height rows of `size` pixels
  const mid = new Float64Array(image.height * size * 3);
  for (let y = 0; y < image.height; y++) {
    for (let x = 0; x < size; x++) {
      const { start, weights } = horizontal[x];
      let r = 0;
      let g = 0;
      let b = 0;
      for (let k = 0; k < weights.length; k++) {
        const src = (y * image.width + start + k) * 3;
        r += weights[k] * image.data[src];
        g += weights[k] * image.data[src + 1];
        b += weights[k] * image.data[src + 2];
      }
      const dst = (y * size + x) * 3;
      mid[dst] = r;
      mid[dst + 1] = g;
      mid[dst + 2] = b;
    }
  }
  const out = new Float64Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    const { start, weights } = vertical[y];
    for (let x = 0; x < size; x++) {
      let r = 0;
      let g = 0;
      let b = 0;
      for (let k = 0; k < weights.length; k++) {
        const src = ((start + k) * size + x) * 3;
        r += weights[k] * mid[src];
        g += weights[k] * mid[src + 1];
        b += weights[k] * mid[src + 2];
      }
      const dst = (y * size + x) * 3;
      out[dst] = r;
      out[dst + 1] = g;
      out[dst + 2] = b;
    }
  }
  return out;
}
