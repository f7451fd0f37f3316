/**
 * Export jobs: turn a local dataset + encoder into a view-group directory,
 * and a class list + template file into a prompt-bank store. The strong
 * views are a K-view approximation of on-the-fly augmentation: each view k
 * is one independent seeded strong transform of every image, and K is
 * recorded in the group manifest.
 */

import { mkdirSync, readFileSync } from 'fs';
import * as path from 'path';

import { Dataset, loadDataset } from './datasets.js';
import { Encoder, loadEncoder } from './encoders.js';
import { strongTransform, weakTransform } from './image.js';
import { Manifest, Matrix, validateViewGroup, writeStore } from './lpce.js';
import { Rng } from './rng.js';

export interface ExportJob {
  dataset: string; // selector, see datasets.ts
  encoder: string; // selector, see encoders.ts
  outDir: string;
  strongViews: number; // K >= 0
  imageSize: number;
  seed: number;
  limit?: number; // optional subset for smoke runs
}

function toMatrix(vectors: Float64Array[]): Matrix {
  const rows = vectors.length;
  const cols = vectors[0]?.length ?? 0;
  const data = new Float32Array(rows * cols);
  vectors.forEach((v, i) => data.set(Float32Array.from(v), i * cols));
  return { rows, cols, data };
}

export interface ImageExportResult {
  dir: string;
  nRows: number;
  dim: number;
  nViews: number;
}

export async function exportImageEmbeddings(job: ExportJob): Promise<ImageExportResult> {
  if (job.strongViews < 0) throw new Error('strongViews must be >= 0');
  const dataset: Dataset = loadDataset(job.dataset, job.limit);
  if (dataset.images.length === 0) throw new Error(`dataset ${job.dataset} is empty`);
  const encoder: Encoder = await loadEncoder(job.encoder);

  mkdirSync(job.outDir, { recursive: true });
  const weakImages = dataset.images.map((img) => weakTransform(img, job.imageSize));
  const weak = toMatrix(await encoder.encodeImages(weakImages));

  const manifest: Manifest = {
    class_names: dataset.classNames,
    labels: dataset.labels,
    view_group: path.basename(job.outDir),
    source: `bridge export of ${job.dataset} via ${encoder.name}`,
    strong_views: job.strongViews,
    image_size: job.imageSize,
    seed: job.seed,
  };
  writeStore(weak, manifest, path.join(job.outDir, 'weak.lpce'), { writeManifest: false });

  for (let k = 0; k < job.strongViews; k++) {
    const views = dataset.images.map((img, i) =>
      strongTransform(img, job.imageSize, new Rng(job.seed, 5, k, i)),
    );
    const matrix = toMatrix(await encoder.encodeImages(views));
    writeStore(matrix, manifest, path.join(job.outDir, `strong_${k}.lpce`), {
      writeManifest: false,
    });
  }
  const { writeFileSync } = await import('fs');
  writeFileSync(
    path.join(job.outDir, 'group.manifest.json'),
    JSON.stringify(manifest, null, 2) + '\n',
  );

  const report = validateViewGroup(job.outDir);
  if (!report.valid) {
    throw new Error(`exported group failed validation: ${report.problems.join('; ')}`);
  }
  return { dir: job.outDir, nRows: report.nRows, dim: report.dim, nViews: report.nViews };
}

export function readTemplates(file: string): string[] {
  const lines = readFileSync(file, 'utf8')
    .split('\n')
    .map((l) => l.trim())
    .filter((l) => l.length > 0 && !l.startsWith('#'));
  if (lines.length === 0) throw new Error(`no templates in ${file}`);
  for (const line of lines) {
    if (!line.includes('{}')) {
      throw new Error(`template "${line}" is missing the {} placeholder`);
    }
  }
  return lines;
}

export interface PromptExportResult {
  path: string;
  nClasses: number;
  nPrompts: number;
  dim: number;
}

/** C*P x D store, row (c, p) at index c*P + p, manifest prompt_count = P */
export async function exportPromptEmbeddings(
  classNames: string[],
  templatesFile: string,
  encoderSelector: string,
  outPath: string,
): Promise<PromptExportResult> {
  if (classNames.length < 2) throw new Error('need at least 2 class names');
  const templates = readTemplates(templatesFile);
  const encoder = await loadEncoder(encoderSelector);

  const texts: string[] = [];
  for (const name of classNames) {
    for (const template of templates) {
      texts.push(template.replaceAll('{}', name));
    }
  }
  const embeddings = await encoder.encodeTexts(texts);
  const matrix = toMatrix(embeddings);
  const manifest: Manifest = {
    class_names: classNames,
    prompt_count: templates.length,
    source: `bridge prompt bank via ${encoder.name} from ${path.basename(templatesFile)}`,
  };
  writeStore(matrix, manifest, outPath);
  return {
    path: outPath,
    nClasses: classNames.length,
    nPrompts: templates.length,
    dim: matrix.cols,
  };
}
