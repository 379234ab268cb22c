/**
 * Adapter entry points:
 *   node dist/cli.js verify <corpusDir> [reportPath]
 *   node dist/cli.js apply <policy.json> <inputDir> <outDir> <seed>
 */

import fs from "node:fs";
import path from "node:path";
import { applyPolicy } from "./apply.js";
import { verifyConformance } from "./conformance.js";
import { loadPolicy } from "./policy.js";
import { readPng, writePng } from "./png.js";
import { streamForItem } from "./rng.js";

function cmdVerify(args: string[]): number {
  const [corpusDir, reportPath] = args;
  if (!corpusDir) {
    console.error("usage: cli.js verify <corpusDir> [reportPath]");
    return 2;
  }
  const report = verifyConformance(corpusDir);
  const payload = JSON.stringify(report, null, 2) + "\n";
  if (reportPath) fs.writeFileSync(reportPath, payload);
  console.log(`conformance: ${report.passed}/${report.total} pairs byte-identical`);
  for (const failure of report.failures.slice(0, 5)) {
    console.error(
      `MISMATCH ${failure.output} (${failure.op} level ${failure.level}): ` +
        JSON.stringify(failure.firstMismatch),
    );
  }
  return report.failed === 0 ? 0 : 1;
}

function cmdApply(args: string[]): number {
  const [policyPath, inputDir, outDir, seedArg] = args;
  if (!policyPath || !inputDir || !outDir) {
    console.error("usage: cli.js apply <policy.json> <inputDir> <outDir> [seed]");
    return 2;
  }
  const seed = seedArg ? Number(seedArg) : 0;
  const policy = loadPolicy(policyPath);
  const files = fs
    .readdirSync(inputDir)
    .filter((f) => f.toLowerCase().endsWith(".png"))
    .sort();
  if (files.length === 0) {
    console.error(`no .png files under ${inputDir}`);
    return 2;
  }
  fs.mkdirSync(outDir, { recursive: true });
  const rows = files.map((file, index) => {
    const img = readPng(path.join(inputDir, file));
    const { image, subpolicyIndex } = applyPolicy(img, policy, streamForItem(seed, index));
    writePng(image, path.join(outDir, file));
    return { file, index, subpolicy_index: subpolicyIndex };
  });
  fs.writeFileSync(
    path.join(outDir, "trace.json"),
    JSON.stringify({ version: 1, seed, policy: policyPath, rows }, null, 2) + "\n",
  );
  console.log(`augmented ${files.length} images into ${outDir}`);
  return 0;
}

function main(): number {
  const [command, ...rest] = process.argv.slice(2);
  try {
    if (command === "verify") return cmdVerify(rest);
    if (command === "apply") return cmdApply(rest);
    console.error("usage: cli.js <verify|apply> ...");
    return 2;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

process.exit(main());
