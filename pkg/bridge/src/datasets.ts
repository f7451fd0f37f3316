/**
 * Local dataset loaders. Selector syntax:
 *
 *   synthetic:classes=4,per_class=25,size=32,seed=7
 *   cifar10-bin:/path/to/test_batch.bin      (CIFAR-10 binary records)
 *   raw:/path/to/dir                          (index.json + images.bin u8 HWC)
 *
 * Everything loads fully into memory; these are export jobs, not streaming
 * pipelines.
 */

import { existsSync, readFileSync } from 'fs';
import * as path from 'path';

import { Image, makeImage } from './image.js';
import { Rng } from './rng.js';

export interface Dataset {
  images: Image[];
  labels: number[];
  classNames: string[];
}

export const CIFAR10_CLASSES = [
  'airplane', 'automobile', 'bird', 'cat', 'deer',
  'dog', 'frog', 'horse', 'ship', 'truck',
];

function parseParams(spec: string): Map<string, string> {
  const out = new Map<string, string>();
  if (!spec) return out;
  for (const part of spec.split(',')) {
    const [k, v] = part.split('=');
    if (!k || v === undefined) throw new Error(`bad dataset parameter ${part!}`);
    out.set(k, v);
  }
  return out;
}

/** seeded class-patterned images so offline exports have real structure */
export function syntheticDataset(spec: string): Dataset {
  const p = parseParams(spec);
  const classes = Number(p.get('classes') ?? 4);
  const perClass = Number(p.get('per_class') ?? 25);
  const size = Number(p.get('size') ?? 32);
  const seed = Number(p.get('seed') ?? 7);
  if (classes < 2 || perClass < 1 || size < 8) {
    throw new Error(`bad synthetic dataset parameters ${spec}`);
  }

  const images: Image[] = [];
  const labels: number[] = [];
  for (let c = 0; c < classes; c++) {
    const crng = new Rng(seed, 1, c);
    const meanColor = [0, 1, 2].map(() => 0.5 + 0.2 * crng.uniform(-1, 1));
    const fx = 1 + crng.int(3);
    const fy = 1 + crng.int(3);
    const phases = [0, 1, 2].map(() => crng.uniform(0, 2 * Math.PI));
    for (let i = 0; i < perClass; i++) {
      const srng = new Rng(seed, 2, c, i);
      const amp = [0, 1, 2].map(() => 1 + 0.5 * srng.uniform(-1, 1));
      const img = makeImage(size, size);
      for (let y = 0; y < size; y++) {
        for (let x = 0; x < size; x++) {
          const wave = (2 * Math.PI * (fx * y + fy * x)) / size;
          for (let ch = 0; ch < 3; ch++) {
            const v =
              meanColor[ch] +
              amp[ch] * 0.2 * Math.sin(wave + phases[ch]) +
              0.03 * srng.normal();
            img.data[(y * size + x) * 3 + ch] = Math.min(1, Math.max(0, v));
          }
        }
      }
      images.push(img);
      labels.push(c);
    }
  }
  return { images, labels, classNames: Array.from({ length: classes }, (_, c) => `class_${c}`) };
}

/** one CIFAR-10 binary file: records of [label u8][1024 R][1024 G][1024 B] */
export function cifar10Binary(filePath: string, limit?: number): Dataset {
  if (!existsSync(filePath)) {
    throw new Error(`dataset unavailable: ${filePath} does not exist`);
  }
  const buf = readFileSync(filePath);
  const record = 1 + 3 * 1024;
  if (buf.length % record !== 0) {
    throw new Error(`${filePath} is not a CIFAR-10 binary batch (size ${buf.length})`);
  }
  const total = buf.length / record;
  const n = limit !== undefined ? Math.min(limit, total) : total;
  const images: Image[] = [];
  const labels: number[] = [];
  for (let i = 0; i < n; i++) {
    const base = i * record;
    labels.push(buf.readUInt8(base));
    const img = makeImage(32, 32);
    for (let c = 0; c < 3; c++) {
      for (let px = 0; px < 1024; px++) {
        img.data[px * 3 + c] = buf.readUInt8(base + 1 + c * 1024 + px) / 255;
      }
    }
    images.push(img);
  }
  return { images, labels, classNames: CIFAR10_CLASSES.slice() };
}

/** directory with index.json {width,height,class_names,labels} + images.bin */
export function rawDirectory(dir: string): Dataset {
  const indexPath = path.join(dir, 'index.json');
  if (!existsSync(indexPath)) {
    throw new Error(`dataset unavailable: ${indexPath} does not exist`);
  }
  const index = JSON.parse(readFileSync(indexPath, 'utf8')) as {
    width: number;
    height: number;
    class_names: string[];
    labels: number[];
  };
  const { width, height, class_names: classNames, labels } = index;
  const bin = readFileSync(path.join(dir, 'images.bin'));
  const perImage = width * height * 3;
  if (bin.length !== labels.length * perImage) {
    throw new Error(`images.bin holds ${bin.length} bytes, expected ${labels.length * perImage}`);
  }
  const images: Image[] = [];
  for (let i = 0; i < labels.length; i++) {
    const img = makeImage(height, width);
    for (let j = 0; j < perImage; j++) {
      img.data[j] = bin.readUInt8(i * perImage + j) / 255;
    }
    images.push(img);
  }
  return { images, labels, classNames };
}

export function loadDataset(selector: string, limit?: number): Dataset {
  const sep = selector.indexOf(':');
  const kind = sep === -1 ? selector : selector.slice(0, sep);
  const rest = sep === -1 ? '' : selector.slice(sep + 1);
  let ds: Dataset;
  switch (kind) {
    case 'synthetic':
      ds = syntheticDataset(rest);
      break;
    case 'cifar10-bin':
      return cifar10Binary(rest, limit);
    case 'raw':
      ds = rawDirectory(rest);
      break;
    default:
      throw new Error(
        `unknown dataset kind ${kind!}; use synthetic:, cifar10-bin: or raw:`,
      );
  }
  if (limit !== undefined && limit < ds.images.length) {
    ds = {
      images: ds.images.slice(0, limit),
      labels: ds.labels.slice(0, limit),
      classNames: ds.classNames,
    };
  }
  return ds;
}
