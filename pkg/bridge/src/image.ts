/**
 * Image transforms applied before encoding: the deterministic weak (teacher)
 * transform and the seeded strong (student) stack of resize + padded random
 * crop + horizontal flip + two randomly drawn photometric/geometric ops at
 * fixed magnitude + cutout. Values live in [0, 1], RGB interleaved.
 */

import { Rng } from './rng.js';

export interface Image {
  h: number;
  w: number;
  data: Float64Array; // h*w*3, row-major, RGB interleaved
}

export function makeImage(h: number, w: number, fill = 0): Image {
  const data = new Float64Array(h * w * 3);
  if (fill !== 0) data.fill(fill);
  return { h, w, data };
}

export function getPx(img: Image, y: number, x: number, c: number): number {
  return img.data[(y * img.w + x) * 3 + c];
}

export function setPx(img: Image, y: number, x: number, c: number, v: number): void {
  img.data[(y * img.w + x) * 3 + c] = v;
}

export function clampImage(img: Image): Image {
  for (let i = 0; i < img.data.length; i++) {
    img.data[i] = Math.min(1, Math.max(0, img.data[i]));
  }
  return img;
}

export function resizeBilinear(img: Image, outH: number, outW: number): Image {
  if (outH === img.h && outW === img.w) {
    return { h: img.h, w: img.w, data: img.data.slice() };
  }
  const out = makeImage(outH, outW);
  const sy = img.h / outH;
  const sx = img.w / outW;
  for (let y = 0; y < outH; y++) {
    let fy = (y + 0.5) * sy - 0.5;
    fy = Math.min(img.h - 1, Math.max(0, fy));
    const y0 = Math.floor(fy);
    const y1 = Math.min(y0 + 1, img.h - 1);
    const wy = fy - y0;
    for (let x = 0; x < outW; x++) {
      let fx = (x + 0.5) * sx - 0.5;
      fx = Math.min(img.w - 1, Math.max(0, fx));
      const x0 = Math.floor(fx);
      const x1 = Math.min(x0 + 1, img.w - 1);
      const wx = fx - x0;
      for (let c = 0; c < 3; c++) {
        const top = getPx(img, y0, x0, c) * (1 - wx) + getPx(img, y0, x1, c) * wx;
        const bot = getPx(img, y1, x0, c) * (1 - wx) + getPx(img, y1, x1, c) * wx;
        setPx(out, y, x, c, top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

export function centerCrop(img: Image, size: number): Image {
  const y0 = Math.floor((img.h - size) / 2);
  const x0 = Math.floor((img.w - size) / 2);
  return crop(img, y0, x0, size, size);
}

export function crop(img: Image, y0: number, x0: number, h: number, w: number): Image {
  const out = makeImage(h, w);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      for (let c = 0; c < 3; c++) {
        setPx(out, y, x, c, getPx(img, y0 + y, x0 + x, c));
      }
    }
  }
  return out;
}

/** deterministic teacher transform: short-side resize then center crop */
export function weakTransform(img: Image, outSize: number): Image {
  if (outSize < 8) throw new Error('outSize must be >= 8');
  let rh: number;
  let rw: number;
  if (img.h <= img.w) {
    rh = outSize;
    rw = Math.max(outSize, Math.round((img.w * outSize) / img.h));
  } else {
    rw = outSize;
    rh = Math.max(outSize, Math.round((img.h * outSize) / img.w));
  }
  return centerCrop(resizeBilinear(img, rh, rw), outSize);
}

/** inverse-mapped affine warp about the center, zeros outside the input */
export function warpAffine(img: Image, inv: number[][]): Image {
  const out = makeImage(img.h, img.w);
  const cy = (img.h - 1) / 2;
  const cx = (img.w - 1) / 2;
  for (let y = 0; y < img.h; y++) {
    for (let x = 0; x < img.w; x++) {
      const dx = x - cx;
      const dy = y - cy;
      const srcX = inv[0][0] * dx + inv[0][1] * dy + inv[0][2] + cx;
      const srcY = inv[1][0] * dx + inv[1][1] * dy + inv[1][2] + cy;
      const x0 = Math.floor(srcX);
      const y0 = Math.floor(srcY);
      const wx = srcX - x0;
      const wy = srcY - y0;
      for (let c = 0; c < 3; c++) {
        let acc = 0;
        for (const [yy, xx, wgt] of [
          [y0, x0, (1 - wx) * (1 - wy)],
          [y0, x0 + 1, wx * (1 - wy)],
          [y0 + 1, x0, (1 - wx) * wy],
          [y0 + 1, x0 + 1, wx * wy],
        ] as const) {
          if (yy >= 0 && yy < img.h && xx >= 0 && xx < img.w) {
            acc += wgt * getPx(img, yy, xx, c);
          }
        }
        setPx(out, y, x, c, acc);
      }
    }
  }
  return out;
}

const MAGNITUDE = 9 / 30;
const OPS = [
  'identity', 'brightness', 'contrast', 'rotate',
  'shear_x', 'shear_y', 'translate_x', 'translate_y',
] as const;

function applyOp(img: Image, op: (typeof OPS)[number], rng: Rng): Image {
  const sign = rng.float() < 0.5 ? 1 : -1;
  switch (op) {
    case 'identity':
      return img;
    case 'brightness': {
      const f = 1 + sign * 0.9 * MAGNITUDE;
      const out = { h: img.h, w: img.w, data: img.data.slice() };
      for (let i = 0; i < out.data.length; i++) out.data[i] *= f;
      return clampImage(out);
    }
    case 'contrast': {
      const f = 1 + sign * 0.9 * MAGNITUDE;
      let mean = 0;
      for (const v of img.data) mean += v;
      mean /= img.data.length;
      const out = { h: img.h, w: img.w, data: img.data.slice() };
      for (let i = 0; i < out.data.length; i++) {
        out.data[i] = (out.data[i] - mean) * f + mean;
      }
      return clampImage(out);
    }
    case 'rotate': {
      const theta = (sign * 30 * MAGNITUDE * Math.PI) / 180;
      const c = Math.cos(theta);
      const s = Math.sin(theta);
      return warpAffine(img, [[c, s, 0], [-s, c, 0]]);
    }
    case 'shear_x':
      return warpAffine(img, [[1, -sign * 0.3 * MAGNITUDE, 0], [0, 1, 0]]);
    case 'shear_y':
      return warpAffine(img, [[1, 0, 0], [-sign * 0.3 * MAGNITUDE, 1, 0]]);
    case 'translate_x':
      return warpAffine(img, [[1, 0, -sign * 0.33 * MAGNITUDE * img.w], [0, 1, 0]]);
    case 'translate_y':
      return warpAffine(img, [[1, 0, 0], [0, 1, -sign * 0.33 * MAGNITUDE * img.h]]);
  }
}

export function cutout(img: Image, side: number, cy: number, cx: number): Image {
  const out = { h: img.h, w: img.w, data: img.data.slice() };
  const y0 = Math.max(0, cy - Math.floor(side / 2));
  const x0 = Math.max(0, cx - Math.floor(side / 2));
  for (let y = y0; y < Math.min(img.h, y0 + side); y++) {
    for (let x = x0; x < Math.min(img.w, x0 + side); x++) {
      for (let c = 0; c < 3; c++) setPx(out, y, x, c, 0);
    }
  }
  return out;
}

/** the student stack; deterministic given the rng stream */
export function strongTransform(img: Image, outSize: number, rng: Rng): Image {
  let x = weakTransform(img, outSize);

  const pad = 4;
  const padded = makeImage(outSize + 2 * pad, outSize + 2 * pad);
  for (let y = 0; y < outSize; y++) {
    for (let xx = 0; xx < outSize; xx++) {
      for (let c = 0; c < 3; c++) {
        setPx(padded, y + pad, xx + pad, c, getPx(x, y, xx, c));
      }
    }
  }
  const dy = rng.int(2 * pad + 1);
  const dx = rng.int(2 * pad + 1);
  x = crop(padded, dy, dx, outSize, outSize);

  if (rng.float() < 0.5) {
    const flipped = makeImage(outSize, outSize);
    for (let y = 0; y < outSize; y++) {
      for (let xx = 0; xx < outSize; xx++) {
        for (let c = 0; c < 3; c++) {
          setPx(flipped, y, xx, c, getPx(x, y, outSize - 1 - xx, c));
        }
      }
    }
    x = flipped;
  }

  for (let i = 0; i < 2; i++) {
    x = applyOp(x, OPS[rng.int(OPS.length)], rng);
  }

  const cy = rng.int(outSize);
  const cx = rng.int(outSize);
  x = cutout(x, Math.floor(outSize / 8), cy, cx);
  return clampImage(x);
}
