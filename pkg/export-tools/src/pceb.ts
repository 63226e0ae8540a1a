/**
 * PCEB embedding store writer/reader and the record key scheme.
 *
 * Layout, all little-endian: magic "PCEB", u16 version, u16 dimension,
 * u32 record count, then per record [u16 key length, UTF-8 key bytes,
 * dimension x float32]. Vectors are stored unnormalized; the consumer
 * normalizes when it computes cosines.
 */

import * as fs from 'node:fs';

export const PCEB_MAGIC = 'PCEB';
export const PCEB_VERSION = 1;

export interface PcebRecord {
  key: string;
  vector: Float32Array;
}

export interface PcebFile {
  version: number;
  dim: number;
  count: number;
  vectors: Map<string, Float32Array>;
}

/**
 * Print a coordinate with two decimals the way Python's "%.2f" does:
 * correct rounding of the exact binary double, ties to even.
 *
 * Number.prototype.toFixed(2) rounds ties away from zero instead, so keys
 * built with it can disagree with the consumer on values like 0.125. A
 * 20-digit expansion is faithful enough to decide every case: doubles in
 * the coordinate range are never closer than ~1e-18 to a rounding
 * boundary they do not sit exactly on.
 */
export function formatCoord(value: number): string {
  if (!Number.isFinite(value)) throw new Error(`non-finite coordinate: ${value}`);
  if (Math.abs(value) >= 1e15) throw new Error(`coordinate out of range: ${value}`);
  const sign = value < 0 || Object.is(value, -0) ? '-' : '';
  const expanded = Math.abs(value).toFixed(20);
  const dot = expanded.indexOf('.');
  // integer digits plus the two kept decimals
  const digits = (expanded.slice(0, dot) + expanded.slice(dot + 1, dot + 3)).split('');
  const next = expanded.charCodeAt(dot + 3) - 48;
  const restNonZero = /[1-9]/.test(expanded.slice(dot + 4));
  const last = digits[digits.length - 1].charCodeAt(0) - 48;
  let carry = next > 5 || (next === 5 && (restNonZero || last % 2 === 1));
  for (let i = digits.length - 1; carry && i >= 0; i--) {
    const d = digits[i].charCodeAt(0) - 48 + 1;
    digits[i] = String(d % 10);
    carry = d === 10;
  }
  if (carry) digits.unshift('1');
  const joined = digits.join('');
  const intPart = joined.slice(0, -2).replace(/^0+(?=\d)/, '');
  return `${sign}${intPart}.${joined.slice(-2)}`;
}

export function imageKey(imageId: string): string {
  return `img:${imageId}`;
}

export function boxKey(
  imageId: string,
  box: readonly [number, number, number, number],
): string {
  const [x0, y0, x1, y1] = box;
  return `box:${imageId}:${formatCoord(x0)}:${formatCoord(y0)}:${formatCoord(x1)}:${formatCoord(y1)}`;
}

export function textKey(category: string): string {
  return `txt:${category}`;
}

/** Serialize records; rejects duplicate keys, listing every offender. */
export function encodePceb(records: readonly PcebRecord[], dim?: number): Buffer {
  const seen = new Set<string>();
  const duplicates = new Set<string>();
  let width = dim;
  for (const record of records) {
    if (seen.has(record.key)) duplicates.add(record.key);
    seen.add(record.key);
    if (width === undefined) width = record.vector.length;
    if (record.vector.length !== width) {
      throw new Error(
        `vector for key '${record.key}' has dimension ${record.vector.length}, expected ${width}`,
      );
    }
    for (const v of record.vector) {
      if (!Number.isFinite(v)) throw new Error(`vector for key '${record.key}' has non-finite entries`);
    }
  }
  if (duplicates.size > 0) {
    throw new Error(`duplicate embedding keys: ${[...duplicates].sort().join(', ')}`);
  }
  width = width ?? 0;
  if (width > 0xffff) throw new Error(`dimension ${width} exceeds the u16 field`);

  const header = Buffer.alloc(12);
  header.write(PCEB_MAGIC, 0, 'ascii');
  header.writeUInt16LE(PCEB_VERSION, 4);
  header.writeUInt16LE(width, 6);
  header.writeUInt32LE(records.length, 8);
  const chunks: Buffer[] = [header];
  for (const record of records) {
    const keyBytes = Buffer.from(record.key, 'utf8');
    if (keyBytes.length > 0xffff) {
      throw new Error(`key too long (${keyBytes.length} bytes): ${record.key.slice(0, 40)}...`);
    }
    const head = Buffer.alloc(2);
    head.writeUInt16LE(keyBytes.length, 0);
    const values = Buffer.alloc(4 * width);
    for (let i = 0; i < width; i++) values.writeFloatLE(record.vector[i], 4 * i);
    chunks.push(head, keyBytes, values);
  }
  return Buffer.concat(chunks);
}

export function writePceb(path: string, records: readonly PcebRecord[], dim?: number): void {
  fs.writeFileSync(path, encodePceb(records, dim));
}

export function decodePceb(data: Buffer): PcebFile {
  if (data.length < 12) throw new Error(`file shorter than the fixed header (${data.length} bytes)`);
  const magic = data.toString('ascii', 0, 4);
  if (magic !== PCEB_MAGIC) throw new Error(`bad magic '${magic}', expected '${PCEB_MAGIC}'`);
  const version = data.readUInt16LE(4);
  if (version !== PCEB_VERSION) throw new Error(`unsupported version ${version}`);
  const dim = data.readUInt16LE(6);
  const count = data.readUInt32LE(8);
  const vectors = new Map<string, Float32Array>();
  let offset = 12;
  for (let i = 0; i < count; i++) {
    if (offset + 2 > data.length) throw new Error(`truncated before key length of record ${i}`);
    const keyLength = data.readUInt16LE(offset);
    offset += 2;
    if (offset + keyLength > data.length) throw new Error(`truncated inside key of record ${i}`);
    const key = data.toString('utf8', offset, offset + keyLength);
    offset += keyLength;
    if (offset + 4 * dim > data.length) throw new Error(`truncated inside values of record ${i}`);
    const vector = new Float32Array(dim);
    for (let d = 0; d < dim; d++) vector[d] = data.readFloatLE(offset + 4 * d);
    offset += 4 * dim;
    if (vectors.has(key)) throw new Error(`duplicate key '${key}' in record ${i}`);
    vectors.set(key, vector);
  }
  if (offset !== data.length) {
    throw new Error(`${data.length - offset} trailing bytes after last record`);
  }
  return { version, dim, count, vectors };
}

export function readPceb(path: string): PcebFile {
  return decodePceb(fs.readFileSync(path));
}
