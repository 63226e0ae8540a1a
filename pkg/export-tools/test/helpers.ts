import * as fs from 'node:fs';
import * as path from 'node:path';

import { encodePng, RgbImage } from '../src/images';

export interface Dataset {
  imagesDir: string;
  proposalsPath: string;
  vocabPath: string;
  /** image id -> proposal boxes, in file order */
  proposals: Record<string, Array<[number, number, number, number]>>;
  names: string[];
}

export function gradientImage(width: number, height: number, seed: number): RgbImage {
  const data = new Uint8Array(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      for (let c = 0; c < 3; c++) {
        data[(y * width + x) * 3 + c] = (x * 7 + y * 13 + c * 29 + seed * 41) % 256;
      }
    }
  }
  return { width, height, data };
}

/**
 * Two PNGs, three proposals each (coordinates chosen to exercise the
 * two-decimal key formatting) and a five-category vocabulary.
 */
export function buildDataset(root: string): Dataset {
  const imagesDir = path.join(root, 'images');
  fs.mkdirSync(imagesDir, { recursive: true });
  fs.writeFileSync(path.join(imagesDir, 'a.png'), encodePng(gradientImage(16, 12, 1)));
  fs.writeFileSync(path.join(imagesDir, 'b.png'), encodePng(gradientImage(20, 14, 2)));

  const proposals: Dataset['proposals'] = {
    a: [
      [0.125, 0.005, 14.675, 11.375],
      [2.5, 3.5, 9.5, 11.0],
      [0.565, 1.005, 12.345, 10.125],
    ],
    b: [
      [0.375, 0.625, 19.875, 13.125],
      [1.0, 2.0, 18.0, 12.0],
      [3.125, 0.875, 17.625, 9.375],
    ],
  };
  const lines: string[] = [];
  for (const [imageId, boxes] of Object.entries(proposals)) {
    for (const [x0, y0, x1, y1] of boxes) {
      lines.push(JSON.stringify({ image_id: imageId, x0, y0, x1, y1, score: 0.5 }));
    }
  }
  const proposalsPath = path.join(root, 'proposals.jsonl');
  fs.writeFileSync(proposalsPath, lines.join('\n') + '\n');

  const names = ['dog', 'cat', 'bicycle', 'traffic light', 'potted plant'];
  const vocabPath = path.join(root, 'vocab.json');
  fs.writeFileSync(vocabPath, JSON.stringify({ names }) + '\n');

  return { imagesDir, proposalsPath, vocabPath, proposals, names };
}
