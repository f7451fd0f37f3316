import assert from 'node:assert/strict';
import { mkdtempSync, readFileSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import * as path from 'node:path';
import { test } from 'node:test';

import { cifar10Binary, loadDataset } from '../src/datasets.js';
import { exportImageEmbeddings } from '../src/export.js';
import { readStore, validateViewGroup } from '../src/lpce.js';

function tmp(): string {
  return mkdtempSync(path.join(tmpdir(), 'bridge-'));
}

const DATASET = 'synthetic:classes=4,per_class=25,size=32,seed=7';

test('K=0 export of a 100-image subset is a valid group with N=100', async () => {
  const out = path.join(tmp(), 'group');
  const result = await exportImageEmbeddings({
    dataset: DATASET,
    encoder: 'mock:dim=32,seed=3',
    outDir: out,
    strongViews: 0,
    imageSize: 32,
    seed: 42,
  });
  assert.equal(result.nRows, 100);
  assert.equal(result.nViews, 0);
  const report = validateViewGroup(out);
  assert.ok(report.valid);
  assert.equal(report.nRows, 100);
});

test('exported rows are unit-norm within 1e-4 and flagged', async () => {
  const out = path.join(tmp(), 'group');
  await exportImageEmbeddings({
    dataset: DATASET,
    encoder: 'mock:dim=32,seed=3',
    outDir: out,
    strongViews: 2,
    imageSize: 32,
    seed: 42,
  });
  const report = validateViewGroup(out);
  assert.deepEqual(report.unitNormFlags, [true, true, true]);
  const { matrix } = readStore(path.join(out, 'strong_1.lpce'));
  for (let i = 0; i < matrix.rows; i++) {
    let s = 0;
    for (let j = 0; j < matrix.cols; j++) {
      s += matrix.data[i * matrix.cols + j] ** 2;
    }
    assert.ok(Math.abs(Math.sqrt(s) - 1) <= 1e-4);
  }
});

test('manifest carries labels, class names and the K-view record', async () => {
  const out = path.join(tmp(), 'group');
  await exportImageEmbeddings({
    dataset: DATASET,
    encoder: 'mock:dim=32,seed=3',
    outDir: out,
    strongViews: 1,
    imageSize: 32,
    seed: 9,
  });
  const manifest = JSON.parse(
    readFileSync(path.join(out, 'group.manifest.json'), 'utf8'),
  );
  assert.equal(manifest.labels.length, 100);
  assert.equal(manifest.class_names.length, 4);
  assert.equal(manifest.strong_views, 1);
  assert.equal(manifest.seed, 9);
  assert.ok(manifest.source.includes('mock'));
});

test('strong views differ from the weak view and from each other', async () => {
  const out = path.join(tmp(), 'group');
  await exportImageEmbeddings({
    dataset: DATASET,
    encoder: 'mock:dim=32,seed=3',
    outDir: out,
    strongViews: 2,
    imageSize: 32,
    seed: 1,
  });
  const weak = readStore(path.join(out, 'weak.lpce')).matrix.data;
  const s0 = readStore(path.join(out, 'strong_0.lpce')).matrix.data;
  const s1 = readStore(path.join(out, 'strong_1.lpce')).matrix.data;
  assert.notDeepEqual(Array.from(s0), Array.from(weak));
  assert.notDeepEqual(Array.from(s0), Array.from(s1));
});

test('same job twice writes identical bytes', async () => {
  const job = {
    dataset: DATASET,
    encoder: 'mock:dim=16,seed=5',
    strongViews: 1,
    imageSize: 32,
    seed: 4,
  };
  // same basename so the recorded view_group id matches too
  const a = path.join(tmp(), 'group');
  const b = path.join(tmp(), 'group');
  await exportImageEmbeddings({ ...job, outDir: a });
  await exportImageEmbeddings({ ...job, outDir: b });
  for (const f of ['weak.lpce', 'strong_0.lpce', 'group.manifest.json']) {
    assert.deepEqual(readFileSync(path.join(a, f)), readFileSync(path.join(b, f)), f);
  }
});

test('limit trims the dataset', async () => {
  const out = path.join(tmp(), 'group');
  const result = await exportImageEmbeddings({
    dataset: DATASET,
    encoder: 'mock:dim=16,seed=5',
    outDir: out,
    strongViews: 0,
    imageSize: 32,
    seed: 4,
    limit: 10,
  });
  assert.equal(result.nRows, 10);
});

test('unavailable dataset and encoder produce actionable errors', async () => {
  await assert.rejects(
    exportImageEmbeddings({
      dataset: 'cifar10-bin:/nonexistent/test_batch.bin',
      encoder: 'mock:dim=16',
      outDir: path.join(tmp(), 'g'),
      strongViews: 0,
      imageSize: 32,
      seed: 1,
    }),
    /dataset unavailable/,
  );
  await assert.rejects(
    exportImageEmbeddings({
      dataset: DATASET,
      encoder: 'quantum:4',
      outDir: path.join(tmp(), 'g'),
      strongViews: 0,
      imageSize: 32,
      seed: 1,
    }),
    /unknown encoder kind/,
  );
});

test('cifar10 binary batches parse records and labels', () => {
  const dir = tmp();
  const record = 1 + 3 * 1024;
  const buf = Buffer.alloc(2 * record);
  buf.writeUInt8(3, 0); // first label: cat
  buf.fill(128, 1, record); // gray image
  buf.writeUInt8(7, record); // second label: horse
  buf.fill(255, record + 1); // white image
  const file = path.join(dir, 'batch.bin');
  writeFileSync(file, buf);
  const ds = cifar10Binary(file);
  assert.deepEqual(ds.labels, [3, 7]);
  assert.equal(ds.images.length, 2);
  assert.equal(ds.images[0].h, 32);
  assert.ok(Math.abs(ds.images[0].data[0] - 128 / 255) < 1e-6);
  assert.equal(ds.images[1].data[5], 1);
  assert.equal(ds.classNames[3], 'cat');
});

test('malformed cifar10 file is rejected', () => {
  const dir = tmp();
  const file = path.join(dir, 'bad.bin');
  writeFileSync(file, Buffer.alloc(100));
  assert.throws(() => cifar10Binary(file), /not a CIFAR-10 binary batch/);
});

test('raw directory datasets load', () => {
  const dir = tmp();
  writeFileSync(
    path.join(dir, 'index.json'),
    JSON.stringify({ width: 8, height: 8, class_names: ['x', 'y'], labels: [0, 1] }),
  );
  writeFileSync(path.join(dir, 'images.bin'), Buffer.alloc(2 * 8 * 8 * 3, 64));
  const ds = loadDataset(`raw:${dir}`);
  assert.equal(ds.images.length, 2);
  assert.ok(Math.abs(ds.images[1].data[0] - 64 / 255) < 1e-6);
});
