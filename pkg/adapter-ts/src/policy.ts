/**
 * Policy document loading and validation (schema version 1).
 *
 * Strict by design: unknown fields, wrong op-name case, or out-of-grid
 * levels are rejected with errors naming the offending field.
 */

import fs from "node:fs";

export const OP_NAMES = [
  "AutoContrast",
  "Brightness",
  "Color",
  "Contrast",
  "Cutout",
  "Equalize",
  "Invert",
  "Posterize",
  "Sharpness",
  "Solarize",
] as const;

export type OpName = (typeof OP_NAMES)[number];

export interface PolicyOp {
  op: OpName;
  level: number;
}

export interface LoadedPolicy {
  version: 1;
  R: number;
  S: number;
  L: number;
  cutout_fill: 0;
  subpolicies: PolicyOp[][];
}

export class PolicySchemaError extends Error {}

const ALLOWED_FIELDS = new Set(["version", "R", "S", "L", "cutout_fill", "subpolicies"]);

function isPositiveInt(v: unknown): v is number {
  return typeof v === "number" && Number.isInteger(v) && v >= 1;
}

export function validatePolicy(data: unknown): LoadedPolicy {
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    throw new PolicySchemaError("policy document must be a JSON object");
  }
  const doc = data as Record<string, unknown>;
  for (const key of Object.keys(doc)) {
    if (!ALLOWED_FIELDS.has(key)) {
      throw new PolicySchemaError(`unknown policy field: '${key}'`);
    }
  }
  if (doc.version !== 1) {
    throw new PolicySchemaError(`unsupported schema version ${JSON.stringify(doc.version)}, expected 1`);
  }
  for (const key of ALLOWED_FIELDS) {
    if (!(key in doc)) throw new PolicySchemaError(`missing policy field: '${key}'`);
  }
  const { R, S, L } = doc as { R: unknown; S: unknown; L: unknown };
  for (const [name, value] of [["R", R], ["S", S], ["L", L]] as const) {
    if (!isPositiveInt(value)) {
      throw new PolicySchemaError(`field '${name}' must be a positive integer, got ${JSON.stringify(value)}`);
    }
  }
  if ((R as number) < 2) throw new PolicySchemaError(`field 'R' must be >= 2, got ${R}`);
  if (doc.cutout_fill !== 0) {
    throw new PolicySchemaError(`field 'cutout_fill' must be 0, got ${JSON.stringify(doc.cutout_fill)}`);
  }
  const subs = doc.subpolicies;
  if (!Array.isArray(subs) || subs.length !== S) {
    throw new PolicySchemaError(`'subpolicies' must be a list of length S=${S}`);
  }
  subs.forEach((sp, si) => {
    if (!Array.isArray(sp) || sp.length !== L) {
      throw new PolicySchemaError(`subpolicy ${si} must be a list of length L=${L}`);
    }
    sp.forEach((entry, oi) => {
      if (typeof entry !== "object" || entry === null) {
        throw new PolicySchemaError(`subpolicy ${si} op ${oi} must be an object`);
      }
      const keys = Object.keys(entry).sort();
      if (keys.length !== 2 || keys[0] !== "level" || keys[1] !== "op") {
        throw new PolicySchemaError(
          `subpolicy ${si} op ${oi} must have exactly the fields 'op' and 'level'`,
        );
      }
      const { op, level } = entry as { op: unknown; level: unknown };
      if (!OP_NAMES.includes(op as OpName)) {
        throw new PolicySchemaError(`subpolicy ${si} op ${oi}: unknown op name ${JSON.stringify(op)}`);
      }
      if (typeof level !== "number" || !Number.isInteger(level) || level < 0 || level >= (R as number)) {
        throw new PolicySchemaError(
          `subpolicy ${si} op ${oi}: level ${JSON.stringify(level)} outside [0, ${(R as number) - 1}]`,
        );
      }
    });
  });
  return doc as unknown as LoadedPolicy;
}

export function loadPolicy(path: string): LoadedPolicy {
  let parsed: unknown;
  try {
    parsed = JSON.parse(fs.readFileSync(path, "utf-8"));
  } catch (err) {
    throw new PolicySchemaError(`policy file is not valid JSON: ${(err as Error).message}`);
  }
  return validatePolicy(parsed);
}
