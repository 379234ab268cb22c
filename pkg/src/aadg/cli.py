"""Command-line entry points for reproducible runs.

Commands: gen-data, search, search-radg, apply-policy, eval, export-golden.
Exit codes: 0 success, 1 runtime failure, 2 user error (bad config, schema
violation, missing input).  All randomness flows from the --seed / config
seed; nothing reads the wall clock for entropy.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (
    DomainSpec,
    LabeledSample,
    default_domain_specs,
    generate_domain,
    spec_to_dict,
)
from .checkpoint import CheckpointError
from .controller import Controller
from .nets import DomainClassifier, SegModel
from .rng import SplitMix64, stream_for_item
from .search import (
    ConfigError,
    SearchConfig,
    evaluate_model,
    run_radg,
    run_search,
)
from .transforms import (
    OP_ORDER,
    Image,
    Operation,
    PolicySchemaError,
    apply_op,
    apply_policy_traced,
    load_png,
    load_policy,
    save_png,
)

GOLDEN_IMAGE_COUNT = 5
GOLDEN_LEVELS = (0, 5, 9)
GOLDEN_R = 10
GOLDEN_SIZE = 64

USER_ERRORS = (ConfigError, PolicySchemaError, CheckpointError, FileNotFoundError,
               NotADirectoryError, json.JSONDecodeError)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aadg",
        description="Diversity-driven augmentation policy search on a synthetic multi-domain segmentation benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render the synthetic multi-domain dataset to PNG files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=20, help="samples per domain")
    p.add_argument("--size", type=int, default=64, help="image side in pixels")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("search", help="run the full policy search")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_search, method="aadg")

    p = sub.add_parser("search-radg", help="run the uniform-sampling ablation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search, method="radg")

    p = sub.add_parser("apply-policy", help="augment a directory of PNGs with a policy")
    p.add_argument("--policy", required=True, help="policy JSON file")
    p.add_argument("--input", required=True, help="directory of input PNGs")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_apply_policy)

    p = sub.add_parser("eval", help="evaluate a segmentation checkpoint on a dataset")
    p.add_argument("--model", required=True, help="seg model checkpoint")
    p.add_argument("--data", required=True, help="gen-data directory")
    p.add_argument("--out", required=True, help="output directory for metrics")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-golden", help="emit the transform conformance corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_golden)
    return parser


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    specs = default_domain_specs()
    write_dataset(out, specs, args.count, args.seed, args.size)
    print(f"wrote {len(specs)} domains x {args.count} samples to {out}")
    return 0


def write_dataset(out: Path, specs: list[DomainSpec], count: int, seed: int, size: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"version": 1, "seed": seed, "size": size, "count": count, "domains": []}
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(specs))
    for spec, child in zip(specs, children):
        rng = np.random.default_rng(child)
        samples = generate_domain(spec, count, rng, size)
        ddir = out / f"domain_{spec.domain_id}"
        files = []
        for i, sample in enumerate(samples):
            img_rel = f"domain_{spec.domain_id}/img_{i:03d}.png"
            mask_rel = f"domain_{spec.domain_id}/mask_{i:03d}.png"
            save_png(sample.image, out / img_rel, out / mask_rel)
            files.append({"image": img_rel, "mask": mask_rel})
        manifest["domains"].append(
            {"domain_id": spec.domain_id, "spec": spec_to_dict(spec), "files": files}
        )
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_dataset_dir(path: str | Path) -> dict[int, list[LabeledSample]]:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json under {path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    datasets: dict[int, list[LabeledSample]] = {}
    for dom in manifest["domains"]:
        samples = []
        for entry in dom["files"]:
            img = load_png(path / entry["image"], path / entry["mask"])
            samples.append(LabeledSample(img, dom["domain_id"]))
        datasets[dom["domain_id"]] = samples
    return datasets


# ---------------------------------------------------------------------------
# search / search-radg
# ---------------------------------------------------------------------------

#: CLI-only config keys (everything else mirrors SearchConfig).
DATA_KEYS = {"data_dir", "train_count", "eval_count"}


def _load_run_config(path: str | Path):
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config document must be a JSON object")
    data_dir = raw.pop("data_dir", None)
    train_count = raw.pop("train_count", 12)
    eval_count = raw.pop("eval_count", 8)
    for name, value in (("train_count", train_count), ("eval_count", eval_count)):
        if not isinstance(value, int) or value < 1:
            raise ConfigError(name, f"must be a positive integer, got {value!r}")
    config = SearchConfig.from_dict(raw)
    return config, data_dir, train_count, eval_count


def _datasets_for_run(config: SearchConfig, data_dir, train_count, eval_count):
    if data_dir is not None:
        datasets = load_dataset_dir(data_dir)
        return datasets, None
    specs = default_domain_specs()[: config.K]
    if len(specs) < config.K:
        raise ConfigError("K", f"only {len(default_domain_specs())} stock domains available")
    ss = np.random.SeedSequence((config.seed, 0xDA7A))
    children = ss.spawn(2 * len(specs))
    train = {
        s.domain_id: generate_domain(s, train_count, np.random.default_rng(children[i]), config.image_size)
        for i, s in enumerate(specs)
    }
    evals = {
        s.domain_id: generate_domain(
            s, eval_count, np.random.default_rng(children[len(specs) + i]), config.image_size
        )
        for i, s in enumerate(specs)
    }
    return train, evals


def cmd_search(args) -> int:
    config, data_dir, train_count, eval_count = _load_run_config(args.config)
    datasets, eval_datasets = _datasets_for_run(config, data_dir, train_count, eval_count)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runner = run_search if args.method == "aadg" else run_radg
    result = runner(config, datasets, eval_datasets)
    report = result.report

    snapshot = config.to_dict()
    snapshot.update({"data_dir": data_dir, "train_count": train_count, "eval_count": eval_count})
    (out / "config.json").write_text(
        json.dumps(snapshot, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "meta.json").write_text(
        json.dumps({"method": report.method, "wall_clock_seconds": report.wall_clock_seconds},
                   indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    (out / "policy.json").write_text(
        json.dumps(report.best_policy, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    result.model.save(out / "seg_model.ckpt")
    result.classifier.save(out / "domain_classifier.ckpt")
    result.controller.save(out / "controller.ckpt")
    print(f"{report.method}: best reward {report.best_reward:.4f}; artifacts in {out}")
    return 0


# ---------------------------------------------------------------------------
# apply-policy
# ---------------------------------------------------------------------------


def cmd_apply_policy(args) -> int:
    policy = load_policy(args.policy)
    input_dir = Path(args.input)
    if not input_dir.is_dir():
        raise NotADirectoryError(f"input directory not found: {input_dir}")
    files = sorted(p for p in input_dir.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise FileNotFoundError(f"no .png files under {input_dir}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_rows = []
    for index, src in enumerate(files):
        img = load_png(src)
        rng = stream_for_item(args.seed, index)
        augmented, sub_idx, events = apply_policy_traced(img, policy, rng)
        save_png(augmented, out / src.name)
        trace_rows.append(
            {"file": src.name, "index": index, "subpolicy_index": sub_idx, "events": events}
        )
    trace = {"version": 1, "seed": args.seed, "policy": str(args.policy), "rows": trace_rows}
    (out / "trace.json").write_text(
        json.dumps(trace, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"augmented {len(files)} images into {out}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    model = SegModel.load(args.model)
    datasets = load_dataset_dir(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    per_domain = {}
    for d in sorted(datasets):
        per_domain[str(d)] = evaluate_model(model, datasets[d])
    overall = {
        key: float(np.mean([m[key] for m in per_domain.values()]))
        for key in ("dice", "accuracy", "auc")
    }
    payload = {"per_domain": per_domain, "overall": overall}
    (out / "metrics.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    lines = ["domain,dice,accuracy,auc"]
    for d, m in per_domain.items():
        lines.append(f"{d},{m['dice']:.6f},{m['accuracy']:.6f},{m['auc']:.6f}")
    lines.append(f"overall,{overall['dice']:.6f},{overall['accuracy']:.6f},{overall['auc']:.6f}")
    (out / "metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(json.dumps(overall))
    return 0


# ---------------------------------------------------------------------------
# export-golden
# ---------------------------------------------------------------------------


def golden_input_images() -> list[Image]:
    """Five fixed synthetic images spanning the stock domains."""
    specs = default_domain_specs()
    picks = [specs[0], specs[1], specs[2], specs[3], specs[0]]
    images = []
    for i, spec in enumerate(picks):
        rng = np.random.default_rng(np.random.SeedSequence((0x601D, i)))
        sample = generate_domain(spec, 1, rng, GOLDEN_SIZE)[0]
        images.append(Image(sample.image.pixels))  # corpus carries no masks
    return images


def golden_pair_seed(image_index: int, op_index: int, level_index: int) -> int:
    return 100000 + image_index * 1000 + op_index * 10 + level_index


def cmd_export_golden(args) -> int:
    out = Path(args.out)
    (out / "inputs").mkdir(parents=True, exist_ok=True)
    (out / "outputs").mkdir(parents=True, exist_ok=True)
    images = golden_input_images()
    pairs = []
    for i, img in enumerate(images):
        input_rel = f"inputs/input_{i}.png"
        save_png(img, out / input_rel)
        for oi, kind in enumerate(OP_ORDER):
            for li, level in enumerate(GOLDEN_LEVELS):
                seed = golden_pair_seed(i, oi, li)
                op = Operation(kind, level, GOLDEN_R)
                result = apply_op(img, op, SplitMix64(seed))
                output_rel = f"outputs/img{i}_{kind.value}_{level}.png"
                save_png(result, out / output_rel)
                pairs.append(
                    {"input": input_rel, "output": output_rel, "op": kind.value,
                     "level": level, "R": GOLDEN_R, "seed": seed}
                )
    manifest = {"version": 1, "R": GOLDEN_R, "levels": list(GOLDEN_LEVELS), "pairs": pairs}
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(pairs)} golden pairs to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
