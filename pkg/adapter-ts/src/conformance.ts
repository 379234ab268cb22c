/**
 * Golden-corpus verification: replay every manifest pair through the local
 * kernels and compare decoded pixel bytes against the expected outputs.
 */

import fs from "node:fs";
import path from "node:path";
import { applyOp } from "./apply.js";
import { RgbImage } from "./kernels.js";
import { OP_NAMES, OpName } from "./policy.js";
import { readPng } from "./png.js";
import { SplitMix64 } from "./rng.js";

export interface ManifestPair {
  input: string;
  output: string;
  op: OpName;
  level: number;
  R: number;
  seed: number;
}

export interface Mismatch {
  x: number;
  y: number;
  channel: number;
  expected: number;
  got: number;
}

export interface PairResult {
  output: string;
  op: OpName;
  level: number;
  pass: boolean;
  firstMismatch?: Mismatch;
}

export interface ConformanceReport {
  corpus: string;
  total: number;
  passed: number;
  failed: number;
  failures: PairResult[];
}

function firstMismatch(expected: RgbImage, got: RgbImage): Mismatch | undefined {
  for (let i = 0; i < expected.data.length; i++) {
    if (expected.data[i] !== got.data[i]) {
      const pixel = Math.floor(i / 3);
      return {
        x: pixel % expected.width,
        y: Math.floor(pixel / expected.width),
        channel: i % 3,
        expected: expected.data[i],
        got: got.data[i],
      };
    }
  }
  return undefined;
}

export function verifyConformance(corpusDir: string): ConformanceReport {
  const manifestPath = path.join(corpusDir, "manifest.json");
  if (!fs.existsSync(manifestPath)) {
    throw new Error(`no manifest.json under ${corpusDir}`);
  }
  const manifest = JSON.parse(fs.readFileSync(manifestPath, "utf-8"));
  const pairs: ManifestPair[] = manifest.pairs;
  if (!Array.isArray(pairs) || pairs.length === 0) {
    throw new Error(`manifest at ${manifestPath} lists no pairs`);
  }
  const results: PairResult[] = [];
  const inputs = new Map<string, RgbImage>();
  for (const pair of pairs) {
    if (!OP_NAMES.includes(pair.op)) {
      throw new Error(`manifest pair ${pair.output}: unknown op ${JSON.stringify(pair.op)}`);
    }
    let input = inputs.get(pair.input);
    if (!input) {
      input = readPng(path.join(corpusDir, pair.input));
      inputs.set(pair.input, input);
    }
    const expected = readPng(path.join(corpusDir, pair.output));
    const got = applyOp(input, pair.op, pair.level, pair.R, new SplitMix64(pair.seed));
    const mismatch =
      expected.width !== got.width || expected.height !== got.height
        ? { x: -1, y: -1, channel: -1, expected: -1, got: -1 }
        : firstMismatch(expected, got);
    results.push({
      output: pair.output,
      op: pair.op,
      level: pair.level,
      pass: mismatch === undefined,
      ...(mismatch ? { firstMismatch: mismatch } : {}),
    });
  }
  const failures = results.filter((r) => !r.pass);
  return {
    corpus: corpusDir,
    total: results.length,
    passed: results.length - failures.length,
    failed: failures.length,
    failures,
  };
}
