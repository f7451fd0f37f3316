/**
 * The .lpce embedding-store wire format, as consumed by the probe engine.
 *
 *   [magic "LPCE"][version u16 LE][dtype u8][flags u8][N u64 LE][D u64 LE]
 *   [payload float32 LE, row-major]
 *
 * plus a JSON manifest sidecar (<basename>.manifest.json, or a shared
 * group.manifest.json inside a view-group directory). Format conformance is
 * the bridge's entire contract: files written here must load downstream
 * with no special handling.
 */

import { readFileSync, writeFileSync, existsSync, readdirSync, statSync } from 'fs';
import * as path from 'path';

export const MAGIC = 'LPCE';
export const VERSION = 1;
export const DTYPE_F32 = 1;
export const FLAG_UNIT_NORM = 0x01;
export const HEADER_SIZE = 24;
export const UNIT_NORM_TOL = 1e-4;

export interface Matrix {
  rows: number;
  cols: number;
  data: Float32Array; // length rows * cols, row-major
}

export interface Manifest {
  class_names?: string[];
  labels?: number[];
  view_group?: string;
  source?: string;
  prompt_count?: number;
  probe?: { C: number; D: number; bias: boolean };
  [extra: string]: unknown;
}

export class StoreError extends Error {}

export function manifestPath(storePath: string): string {
  const dir = path.dirname(storePath);
  const base = path.basename(storePath).replace(/\.lpce$/, '');
  return path.join(dir, `${base}.manifest.json`);
}

function rowsUnitNorm(m: Matrix): boolean {
  if (m.rows === 0 || m.cols === 0) return false;
  for (let i = 0; i < m.rows; i++) {
    let s = 0;
    for (let j = 0; j < m.cols; j++) {
      const v = m.data[i * m.cols + j];
      s += v * v;
    }
    if (Math.abs(Math.sqrt(s) - 1) > UNIT_NORM_TOL) return false;
  }
  return true;
}

function validateManifest(manifest: Manifest, nRows: number): void {
  if (manifest.labels !== undefined) {
    if (manifest.labels.length !== nRows) {
      throw new StoreError(
        `manifest labels length ${manifest.labels.length} != N=${nRows}`,
      );
    }
    const c = manifest.class_names?.length ?? 0;
    for (const lab of manifest.labels) {
      if (lab < -1 || (lab >= 0 && lab >= c)) {
        throw new StoreError(`manifest label ${lab} outside [-1, C-1]`);
      }
    }
  }
}

export function writeStore(
  matrix: Matrix,
  manifest: Manifest | null,
  filePath: string,
  opts: { writeManifest?: boolean } = {},
): void {
  if (matrix.data.length !== matrix.rows * matrix.cols) {
    throw new StoreError(
      `payload length ${matrix.data.length} != ${matrix.rows}x${matrix.cols}`,
    );
  }
  for (const v of matrix.data) {
    if (!Number.isFinite(v)) throw new StoreError('non-finite payload');
  }
  if (manifest) validateManifest(manifest, matrix.rows);

  const buf = Buffer.alloc(HEADER_SIZE + matrix.data.length * 4);
  buf.write(MAGIC, 0, 'ascii');
  buf.writeUInt16LE(VERSION, 4);
  buf.writeUInt8(DTYPE_F32, 6);
  buf.writeUInt8(rowsUnitNorm(matrix) ? FLAG_UNIT_NORM : 0, 7);
  buf.writeBigUInt64LE(BigInt(matrix.rows), 8);
  buf.writeBigUInt64LE(BigInt(matrix.cols), 16);
  for (let i = 0; i < matrix.data.length; i++) {
    buf.writeFloatLE(matrix.data[i], HEADER_SIZE + i * 4);
  }
  writeFileSync(filePath, buf);
  if (opts.writeManifest !== false) {
    writeFileSync(manifestPath(filePath), JSON.stringify(manifest ?? {}, null, 2) + '\n');
  }
}

export interface Header {
  rows: number;
  cols: number;
  flags: number;
}

export function readHeader(filePath: string): Header {
  const size = statSync(filePath).size;
  const fd = readFileSync(filePath);
  if (fd.length < HEADER_SIZE) {
    throw new StoreError('not an embedding store (file shorter than header)');
  }
  if (fd.toString('ascii', 0, 4) !== MAGIC) {
    throw new StoreError('not an embedding store');
  }
  const version = fd.readUInt16LE(4);
  if (version !== VERSION) throw new StoreError(`unsupported version ${version}`);
  const dtype = fd.readUInt8(6);
  if (dtype !== DTYPE_F32) throw new StoreError(`unsupported dtype code ${dtype}`);
  const flags = fd.readUInt8(7);
  const rows = Number(fd.readBigUInt64LE(8));
  const cols = Number(fd.readBigUInt64LE(16));
  if (size !== HEADER_SIZE + rows * cols * 4) {
    throw new StoreError(
      `truncated payload (header claims ${rows}x${cols}, file holds ` +
        `${Math.floor((size - HEADER_SIZE) / 4)} values)`,
    );
  }
  return { rows, cols, flags };
}

export function readStore(filePath: string): { matrix: Matrix; manifest: Manifest } {
  if (!existsSync(filePath)) throw new StoreError(`no such store: ${filePath}`);
  const header = readHeader(filePath);
  const buf = readFileSync(filePath);
  const data = new Float32Array(header.rows * header.cols);
  for (let i = 0; i < data.length; i++) {
    data[i] = buf.readFloatLE(HEADER_SIZE + i * 4);
  }
  let mPath = manifestPath(filePath);
  if (!existsSync(mPath)) {
    mPath = path.join(path.dirname(filePath), 'group.manifest.json');
  }
  const manifest: Manifest = existsSync(mPath)
    ? JSON.parse(readFileSync(mPath, 'utf8'))
    : {};
  return { matrix: { rows: header.rows, cols: header.cols, data }, manifest };
}

export interface ValidationReport {
  valid: boolean;
  nViews: number;
  nRows: number;
  dim: number;
  unitNormFlags: boolean[];
  problems: string[];
}

export function validateViewGroup(dir: string): ValidationReport {
  const problems: string[] = [];
  const weakPath = path.join(dir, 'weak.lpce');
  if (!existsSync(weakPath)) {
    return { valid: false, nViews: 0, nRows: 0, dim: 0, unitNormFlags: [], problems: ['missing weak store'] };
  }
  let weak: Header;
  try {
    weak = readHeader(weakPath);
  } catch (e) {
    return {
      valid: false, nViews: 0, nRows: 0, dim: 0, unitNormFlags: [],
      problems: [`weak store: ${(e as Error).message}`],
    };
  }
  const flags = [Boolean(weak.flags & FLAG_UNIT_NORM)];

  const indices = readdirSync(dir)
    .map((f) => /^strong_(\d+)\.lpce$/.exec(f))
    .filter((m): m is RegExpExecArray => m !== null)
    .map((m) => Number(m[1]))
    .sort((a, b) => a - b);
  if (!indices.every((v, i) => v === i)) {
    problems.push(`strong view indices not contiguous: ${indices.join(',')}`);
  }
  for (const k of indices) {
    try {
      const h = readHeader(path.join(dir, `strong_${k}.lpce`));
      flags.push(Boolean(h.flags & FLAG_UNIT_NORM));
      if (h.cols !== weak.cols) {
        problems.push(`strong_${k}: dimension mismatch (D=${h.cols}, weak D=${weak.cols})`);
      }
      if (h.rows !== weak.rows) {
        problems.push(`strong_${k}: row count mismatch (N=${h.rows}, weak N=${weak.rows})`);
      }
    } catch (e) {
      problems.push(`strong_${k}: ${(e as Error).message}`);
    }
  }
  return {
    valid: problems.length === 0,
    nViews: indices.length,
    nRows: weak.rows,
    dim: weak.cols,
    unitNormFlags: flags,
    problems,
  };
}
