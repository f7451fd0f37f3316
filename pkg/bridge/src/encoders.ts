/**
 * Encoder backends. Selector syntax:
 *
 *   mock:dim=64,seed=11     deterministic offline encoder (tests, dry runs)
 *   clip:Xenova/clip-vit-base-patch32   real CLIP via @xenova/transformers
 *
 * The clip backend is optional; it is loaded dynamically and reports an
 * actionable error when the package or weights are unavailable.
 */

import { Image, resizeBilinear } from './image.js';
import { Rng } from './rng.js';

export interface Encoder {
  readonly name: string;
  readonly dim: number;
  encodeImages(images: Image[]): Promise<Float64Array[]>;
  encodeTexts(texts: string[]): Promise<Float64Array[]>;
}

function l2normalize(v: Float64Array): Float64Array {
  let s = 0;
  for (const x of v) s += x * x;
  const n = Math.sqrt(s);
  if (n < 1e-12) throw new Error('degenerate embedding (zero norm)');
  for (let i = 0; i < v.length; i++) v[i] /= n;
  return v;
}

/**
 * Deterministic stand-in encoder: images are resized to 16x16, centered,
 * projected through a seeded gaussian matrix and squashed with tanh; texts
 * hash to a seeded stream. Good enough to exercise the full wire format.
 */
export class MockEncoder implements Encoder {
  readonly name: string;
  readonly dim: number;
  private readonly seed: number;
  private proj: Float64Array | null = null; // (16*16*3) x dim

  constructor(dim = 64, seed = 11) {
    if (dim < 8) throw new Error('mock encoder dim must be >= 8');
    this.dim = dim;
    this.seed = seed;
    this.name = `mock:dim=${dim},seed=${seed}`;
  }

  private projection(): Float64Array {
    if (!this.proj) {
      const rng = new Rng(this.seed, 101);
      const rows = 16 * 16 * 3;
      this.proj = new Float64Array(rows * this.dim);
      const scale = 1 / Math.sqrt(rows);
      for (let i = 0; i < this.proj.length; i++) {
        this.proj[i] = scale * rng.normal();
      }
    }
    return this.proj;
  }

  async encodeImages(images: Image[]): Promise<Float64Array[]> {
    const proj = this.projection();
    return images.map((img) => {
      const small = resizeBilinear(img, 16, 16);
      const v = new Float64Array(this.dim);
      for (let i = 0; i < small.data.length; i++) {
        const x = small.data[i] - 0.5;
        for (let j = 0; j < this.dim; j++) {
          v[j] += x * proj[i * this.dim + j];
        }
      }
      for (let j = 0; j < this.dim; j++) v[j] = Math.tanh(4 * v[j]);
      return l2normalize(v);
    });
  }

  async encodeTexts(texts: string[]): Promise<Float64Array[]> {
    return texts.map((t) => {
      // stable 64-bit FNV-1a over the utf8 bytes seeds the text stream
      let h = 0xcbf29ce484222325n;
      for (const byte of Buffer.from(t, 'utf8')) {
        h = ((h ^ BigInt(byte)) * 0x100000001b3n) & 0xffffffffffffffffn;
      }
      const rng = new Rng(h + BigInt(this.seed));
      const v = new Float64Array(this.dim);
      for (let j = 0; j < this.dim; j++) v[j] = rng.normal();
      return l2normalize(v);
    });
  }
}

/** real pretrained vision-language encoder via @xenova/transformers */
export class TransformersClipEncoder implements Encoder {
  readonly name: string;
  dim: number;
  private readonly model: string;
  private readonly lib: any;
  private processor: any = null;
  private vision: any = null;
  private tokenizer: any = null;
  private text: any = null;

  private constructor(model: string, lib: any) {
    this.model = model;
    this.dim = 0; // known after the first encode
    this.name = `clip:${model}`;
    this.lib = lib;
  }

  static async create(model: string): Promise<TransformersClipEncoder> {
    let lib: any;
    try {
      lib = await import('@xenova/transformers' as string);
    } catch {
      throw new Error(
        `encoder clip:${model} needs the optional @xenova/transformers package; ` +
          'install it with `npm install @xenova/transformers` (weights are ' +
          'downloaded on first use)',
      );
    }
    return new TransformersClipEncoder(model, lib);
  }

  private fail(step: string, err: unknown): never {
    throw new Error(
      `clip:${this.model} ${step} failed (${(err as Error).message}); the model ` +
        'weights must be reachable (network access or a pre-populated cache)',
    );
  }

  async encodeImages(images: Image[]): Promise<Float64Array[]> {
    if (!this.vision) {
      try {
        this.processor = await this.lib.AutoProcessor.from_pretrained(this.model);
        this.vision = await this.lib.CLIPVisionModelWithProjection.from_pretrained(
          this.model,
        );
      } catch (err) {
        this.fail('model load', err);
      }
    }
    const out: Float64Array[] = [];
    for (const img of images) {
      const bytes = new Uint8ClampedArray(img.data.length);
      for (let i = 0; i < img.data.length; i++) {
        bytes[i] = Math.round(255 * Math.min(1, Math.max(0, img.data[i])));
      }
      const raw = new this.lib.RawImage(bytes, img.w, img.h, 3);
      try {
        const inputs = await this.processor(raw);
        const { image_embeds } = await this.vision(inputs);
        const v = Float64Array.from(image_embeds.data as Float32Array);
        this.dim = v.length;
        out.push(l2normalize(v));
      } catch (err) {
        this.fail('image encoding', err);
      }
    }
    return out;
  }

  async encodeTexts(texts: string[]): Promise<Float64Array[]> {
    if (!this.text) {
      try {
        this.tokenizer = await this.lib.AutoTokenizer.from_pretrained(this.model);
        this.text = await this.lib.CLIPTextModelWithProjection.from_pretrained(
          this.model,
        );
      } catch (err) {
        this.fail('model load', err);
      }
    }
    const out: Float64Array[] = [];
    for (const t of texts) {
      try {
        const inputs = this.tokenizer([t], { padding: true, truncation: true });
        const { text_embeds } = await this.text(inputs);
        const v = Float64Array.from(text_embeds.data as Float32Array);
        this.dim = v.length;
        out.push(l2normalize(v));
      } catch (err) {
        this.fail('text encoding', err);
      }
    }
    return out;
  }
}

export async function loadEncoder(selector: string): Promise<Encoder> {
  const sep = selector.indexOf(':');
  const kind = sep === -1 ? selector : selector.slice(0, sep);
  const rest = sep === -1 ? '' : selector.slice(sep + 1);
  if (kind === 'mock') {
    const params = new Map(
      rest ? rest.split(',').map((p) => p.split('=') as [string, string]) : [],
    );
    return new MockEncoder(
      Number(params.get('dim') ?? 64),
      Number(params.get('seed') ?? 11),
    );
  }
  if (kind === 'clip') {
    return TransformersClipEncoder.create(rest || 'Xenova/clip-vit-base-patch32');
  }
  throw new Error(`unknown encoder kind ${kind!}; use mock: or clip:`);
}
