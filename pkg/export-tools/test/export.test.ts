import { afterAll, describe, expect, test } from 'vitest';
import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';

import { DevEncoder, loadEncoder } from '../src/encoder';
import { exportEncoder, exportOnnx, ParityError } from '../src/exportOnnx';

const scratch = fs.mkdtempSync(path.join(os.tmpdir(), 'export-tools-'));
afterAll(() => fs.rmSync(scratch, { recursive: true, force: true }));

describe('export-onnx', () => {
  test('writes two models plus a manifest that passes the parity gate', async () => {
    const outDir = path.join(scratch, 'happy');
    const result = await exportOnnx('dev-tiny', outDir);

    expect(fs.existsSync(result.files.imageModel)).toBe(true);
    expect(fs.existsSync(result.files.textModel)).toBe(true);
    const manifest = JSON.parse(fs.readFileSync(result.files.manifest, 'utf8'));
    expect(manifest.variant).toBe('dev-tiny');
    expect(manifest.dim).toBe(32);
    expect(manifest.image_size).toBe(32);
    expect(manifest.mean).toEqual([0, 0, 0]);
    expect(manifest.std).toEqual([1, 1, 1]);
    expect(manifest.context_length).toBe(77);
    expect(manifest.tokenizer).toBe('bytes');
    expect(manifest.files).toEqual({ image_model: 'image.onnx', text_model: 'text.onnx' });

    expect(result.parity.probes.length).toBe(16);
    expect(result.parity.worstCosine).toBeGreaterThanOrEqual(0.999);
  });

  test('parity failure aborts before anything is written', async () => {
    const outDir = path.join(scratch, 'aborted');
    const real = loadEncoder('dev-tiny');
    // reference that disagrees with its own exported graph
    const tampered: DevEncoder = Object.create(real);
    Object.defineProperty(tampered, 'embedPixels', {
      value: (nchw: Float32Array) => {
        const honest = DevEncoder.prototype.embedPixels.call(real, nchw);
        return honest.map((v) => -v);
      },
    });

    await expect(exportEncoder(tampered, outDir)).rejects.toThrow(ParityError);
    await expect(exportEncoder(tampered, outDir)).rejects.toThrow(/no files written/);
    expect(fs.existsSync(outDir)).toBe(false);
  });

  test('rerun produces identical manifest fields and model bytes', async () => {
    const dirA = path.join(scratch, 'rerun-a');
    const dirB = path.join(scratch, 'rerun-b');
    await exportOnnx('dev-base', dirA);
    await exportOnnx('dev-base', dirB);
    for (const name of ['manifest.json', 'image.onnx', 'text.onnx']) {
      const a = fs.readFileSync(path.join(dirA, name));
      const b = fs.readFileSync(path.join(dirB, name));
      expect(a.equals(b)).toBe(true);
    }
  });

  test('pretrained variants are refused up front', async () => {
    const outDir = path.join(scratch, 'refused');
    await expect(exportOnnx('vit-b-32', outDir)).rejects.toThrow(/weights not obtainable/);
    expect(fs.existsSync(outDir)).toBe(false);
  });
});
