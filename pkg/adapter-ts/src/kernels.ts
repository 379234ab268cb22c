/**
 * The ten transform kernels, re-implemented to the pinned arithmetic
 * contract (docs/policy_schema.md): double-precision blends, half-away
 * rounding, clamp to [0, 255].  Byte-exact against the exporting side.
 */

import { OpName } from "./policy.js";
import { SplitMix64 } from "./rng.js";

/** 8-bit RGB raster, interleaved channel data of length width*height*3. */
export interface RgbImage {
  width: number;
  height: number;
  data: Uint8Array;
}

export function cloneImage(img: RgbImage): RgbImage {
  return { width: img.width, height: img.height, data: new Uint8Array(img.data) };
}

export const MAGNITUDE_RANGES: Record<OpName, [number, number] | null> = {
  AutoContrast: null,
  Brightness: [0.1, 1.9],
  Color: [0.1, 1.9],
  Contrast: [0.1, 1.9],
  Cutout: [0.0, 0.2],
  Equalize: null,
  Invert: null,
  Posterize: [4, 8],
  Sharpness: [0.1, 1.9],
  Solarize: [0, 256],
};

export function roundHalfAway(x: number): number {
  return Math.sign(x) * Math.floor(Math.abs(x) + 0.5);
}

function clampU8(x: number): number {
  return Math.min(Math.max(roundHalfAway(x), 0), 255);
}

export function magnitudeValue(op: OpName, level: number, R: number): number {
  if (R < 2) throw new Error(`grid resolution R must be >= 2, got ${R}`);
  if (level < 0 || level >= R) throw new Error(`level ${level} outside [0, ${R - 1}]`);
  const range = MAGNITUDE_RANGES[op];
  if (range === null) return 0;
  const [lo, hi] = range;
  const value = lo + (level * (hi - lo)) / (R - 1);
  return op === "Posterize" || op === "Solarize" ? roundHalfAway(value) : value;
}

/** out = clamp(d + alpha * (v - d)) applied per channel value. */
function blend(img: RgbImage, alpha: number, degenerate: (idx: number) => number): RgbImage {
  const out = cloneImage(img);
  for (let i = 0; i < img.data.length; i++) {
    const v = img.data[i];
    const d = degenerate(i);
    out.data[i] = clampU8(d + alpha * (v - d));
  }
  return out;
}

/** Integer-valued per-pixel luminance, length width*height. */
function luminance(img: RgbImage): Float64Array {
  const n = img.width * img.height;
  const lum = new Float64Array(n);
  for (let p = 0; p < n; p++) {
    lum[p] = roundHalfAway(
      0.299 * img.data[3 * p] + 0.587 * img.data[3 * p + 1] + 0.114 * img.data[3 * p + 2],
    );
  }
  return lum;
}

export function invert(img: RgbImage): RgbImage {
  const out = cloneImage(img);
  for (let i = 0; i < out.data.length; i++) out.data[i] = 255 - img.data[i];
  return out;
}

export function posterize(img: RgbImage, bits: number): RgbImage {
  if (bits < 1 || bits > 8) throw new Error(`posterize bits must be in [1, 8], got ${bits}`);
  const keep = 256 - (1 << (8 - bits));
  const out = cloneImage(img);
  for (let i = 0; i < out.data.length; i++) out.data[i] = img.data[i] & keep;
  return out;
}

export function solarize(img: RgbImage, threshold: number): RgbImage {
  const out = cloneImage(img);
  for (let i = 0; i < out.data.length; i++) {
    const v = img.data[i];
    out.data[i] = v >= threshold ? 255 - v : v;
  }
  return out;
}

export function autocontrast(img: RgbImage): RgbImage {
  const out = cloneImage(img);
  for (let c = 0; c < 3; c++) {
    let lo = 255;
    let hi = 0;
    for (let i = c; i < img.data.length; i += 3) {
      const v = img.data[i];
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
    if (hi <= lo) continue;
    const scale = 255.0 / (hi - lo);
    const lut = new Uint8Array(256);
    for (let v = 0; v < 256; v++) lut[v] = clampU8((v - lo) * scale);
    for (let i = c; i < img.data.length; i += 3) out.data[i] = lut[img.data[i]];
  }
  return out;
}

export function equalize(img: RgbImage): RgbImage {
  const out = cloneImage(img);
  const total = img.width * img.height;
  const step = Math.floor(total / 255);
  if (step === 0) return out;
  for (let c = 0; c < 3; c++) {
    const hist = new Array<number>(256).fill(0);
    for (let i = c; i < img.data.length; i += 3) hist[img.data[i]] += 1;
    if (hist.filter((h) => h > 0).length <= 1) continue;
    const lut = new Uint8Array(256);
    let cumBefore = 0;
    const half = Math.floor(step / 2);
    for (let v = 0; v < 256; v++) {
      lut[v] = Math.min(Math.floor((cumBefore + half) / step), 255);
      cumBefore += hist[v];
    }
    for (let i = c; i < img.data.length; i += 3) out.data[i] = lut[img.data[i]];
  }
  return out;
}

export function brightness(img: RgbImage, alpha: number): RgbImage {
  return blend(img, alpha, () => 0);
}

export function color(img: RgbImage, alpha: number): RgbImage {
  const lum = luminance(img);
  return blend(img, alpha, (i) => lum[Math.floor(i / 3)]);
}

export function contrast(img: RgbImage, alpha: number): RgbImage {
  const lum = luminance(img);
  // integer-valued doubles: the sum is exact, so any summation order agrees
  let sum = 0;
  for (let p = 0; p < lum.length; p++) sum += lum[p];
  const mean = roundHalfAway(sum / lum.length);
  return blend(img, alpha, () => mean);
}

export function sharpness(img: RgbImage, alpha: number): RgbImage {
  const { width: w, height: h } = img;
  const degenerate = new Float64Array(img.data.length);
  for (let i = 0; i < img.data.length; i++) degenerate[i] = img.data[i];
  if (w >= 3 && h >= 3) {
    const at = (x: number, y: number, c: number) => img.data[3 * (y * w + x) + c];
    for (let y = 1; y < h - 1; y++) {
      for (let x = 1; x < w - 1; x++) {
        for (let c = 0; c < 3; c++) {
          const num =
            at(x - 1, y - 1, c) + at(x, y - 1, c) + at(x + 1, y - 1, c) +
            at(x - 1, y, c) + 5 * at(x, y, c) + at(x + 1, y, c) +
            at(x - 1, y + 1, c) + at(x, y + 1, c) + at(x + 1, y + 1, c);
          degenerate[3 * (y * w + x) + c] = num / 13.0;
        }
      }
    }
  }
  return blend(img, alpha, (i) => degenerate[i]);
}

/**
 * Cutout always draws center x then center y, even for a zero-sized patch,
 * so the stream position never depends on the magnitude.
 */
export function cutout(img: RgbImage, fraction: number, rng: SplitMix64): RgbImage {
  const side = roundHalfAway(fraction * Math.min(img.width, img.height));
  const cx = rng.below(img.width);
  const cy = rng.below(img.height);
  const out = cloneImage(img);
  if (side <= 0) return out;
  const half = Math.floor(side / 2);
  const x0 = Math.max(cx - half, 0);
  const y0 = Math.max(cy - half, 0);
  const x1 = Math.min(cx - half + side, img.width);
  const y1 = Math.min(cy - half + side, img.height);
  for (let y = y0; y < y1; y++) {
    for (let x = x0; x < x1; x++) {
      const base = 3 * (y * img.width + x);
      out.data[base] = out.data[base + 1] = out.data[base + 2] = 0;
    }
  }
  return out;
}
