/**
 * Policy application with the shared random-draw discipline: one sub-policy
 * index draw, then Cutout draws in operation order, all from one
 * SplitMix64 stream.
 */

import {
  RgbImage,
  autocontrast,
  brightness,
  color,
  contrast,
  cutout,
  equalize,
  invert,
  magnitudeValue,
  posterize,
  sharpness,
  solarize,
} from "./kernels.js";
import { LoadedPolicy, OpName, PolicyOp } from "./policy.js";
import { SplitMix64 } from "./rng.js";

export function applyOp(img: RgbImage, op: OpName, level: number, R: number, rng: SplitMix64): RgbImage {
  const mag = magnitudeValue(op, level, R);
  switch (op) {
    case "AutoContrast":
      return autocontrast(img);
    case "Brightness":
      return brightness(img, mag);
    case "Color":
      return color(img, mag);
    case "Contrast":
      return contrast(img, mag);
    case "Cutout":
      return cutout(img, mag, rng);
    case "Equalize":
      return equalize(img);
    case "Invert":
      return invert(img);
    case "Posterize":
      return posterize(img, mag);
    case "Sharpness":
      return sharpness(img, mag);
    case "Solarize":
      return solarize(img, mag);
  }
}

export function applySubpolicy(img: RgbImage, ops: PolicyOp[], R: number, rng: SplitMix64): RgbImage {
  let out = img;
  for (const { op, level } of ops) {
    out = applyOp(out, op, level, R, rng);
  }
  return out;
}

export interface ApplyResult {
  image: RgbImage;
  subpolicyIndex: number;
}

export function applyPolicy(img: RgbImage, policy: LoadedPolicy, rng: SplitMix64): ApplyResult {
  const index = rng.below(policy.S);
  const image = applySubpolicy(img, policy.subpolicies[index], policy.R, rng);
  return { image, subpolicyIndex: index };
}
