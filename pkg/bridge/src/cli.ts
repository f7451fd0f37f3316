#!/usr/bin/env node
/**
 * Thin command-line entry:
 *
 *   lpce-bridge export-images  --dataset <sel> --encoder <sel> --out <dir>
 *                              [--views K] [--size N] [--seed S] [--limit N]
 *   lpce-bridge export-prompts --classes a,b,... --encoder <sel> --out <file>
 *                              [--templates file]   (default: bundled list)
 */

import * as path from 'path';
import { fileURLToPath } from 'url';

import { exportImageEmbeddings, exportPromptEmbeddings } from './export.js';

const HERE = path.dirname(fileURLToPath(import.meta.url));
export const BUNDLED_TEMPLATES = path.resolve(HERE, '..', '..', 'data', 'additional_prompts.txt');

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key?.startsWith('--') || value === undefined) {
      throw new Error(`bad arguments near ${key ?? '<end>'}`);
    }
    flags.set(key.slice(2), value);
  }
  return flags;
}

function required(flags: Map<string, string>, name: string): string {
  const v = flags.get(name);
  if (!v) throw new Error(`--${name} is required`);
  return v;
}

export async function run(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    if (command === 'export-images') {
      const flags = parseFlags(rest);
      const result = await exportImageEmbeddings({
        dataset: required(flags, 'dataset'),
        encoder: required(flags, 'encoder'),
        outDir: required(flags, 'out'),
        strongViews: Number(flags.get('views') ?? 4),
        imageSize: Number(flags.get('size') ?? 32),
        seed: Number(flags.get('seed') ?? 42),
        limit: flags.has('limit') ? Number(flags.get('limit')) : undefined,
      });
      console.log(
        `wrote view group ${result.dir}: N=${result.nRows} D=${result.dim} K=${result.nViews}`,
      );
      return 0;
    }
    if (command === 'export-prompts') {
      const flags = parseFlags(rest);
      const result = await exportPromptEmbeddings(
        required(flags, 'classes').split(','),
        flags.get('templates') ?? BUNDLED_TEMPLATES,
        required(flags, 'encoder'),
        required(flags, 'out'),
      );
      console.log(
        `wrote prompt bank ${result.path}: C=${result.nClasses} P=${result.nPrompts} D=${result.dim}`,
      );
      return 0;
    }
    console.error('usage: lpce-bridge <export-images|export-prompts> [flags]');
    return 2;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] && path.resolve(process.argv[1]) === fileURLToPath(import.meta.url);
if (invokedDirectly) {
  run(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
