"""Reproducible multi-run experiments on the synthetic benchmark.

The trend experiment mirrors the ablation protocol: leave-one-domain-out over
the stock domains, three methods (no augmentation, uniform policies, learned
policies), several seeds, mean held-out Dice per method.  Runs are
independent and fan out over worker processes (capped by AADG_THREADS).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bench import DomainSpec, default_domain_specs, generate_domain
from .search import (
    SearchConfig,
    SearchResult,
    evaluate_model,
    run_baseline,
    run_radg,
    run_search,
)
from .util import parallel_map

METHODS = ("baseline", "radg", "aadg")

_RUNNERS = {"baseline": run_baseline, "radg": run_radg, "aadg": run_search}


def trend_config(seed: int = 0) -> SearchConfig:
    """Small-but-honest defaults for the trend experiment: large enough for
    the controller to learn, small enough for a desktop CPU."""
    return SearchConfig(
        R=10, S=2, L=2, B=4, epochs=18, steps_per_epoch=4, K=3,
        batch_size=6, image_size=32, seed=seed, sinkhorn_max_iters=300,
    )


@dataclass(frozen=True)
class TrendTask:
    method: str
    seed: int
    held_out: int
    config: SearchConfig
    train_count: int
    eval_count: int
    size: int

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")


def _trend_datasets(task: TrendTask, specs: list[DomainSpec]):
    """Train sets for the held-in domains plus eval sets everywhere.

    Derived only from (seed, held_out), so all methods of one task pair see
    byte-identical data.
    """
    train, evals = {}, {}
    for spec in specs:
        ss = np.random.SeedSequence((task.seed, task.held_out, spec.domain_id))
        train_child, eval_child = ss.spawn(2)
        if spec.domain_id != task.held_out:
            train[spec.domain_id] = generate_domain(
                spec, task.train_count, np.random.default_rng(train_child), task.size
            )
        evals[spec.domain_id] = generate_domain(
            spec, task.eval_count, np.random.default_rng(eval_child), task.size
        )
    return train, evals


def run_trend_task(task: TrendTask) -> dict:
    specs = [s for s in default_domain_specs() if True]
    train, evals = _trend_datasets(task, specs)
    config = replace(
        task.config,
        K=len(train),
        image_size=task.size,
        seed=task.seed * 100 + task.held_out,
    ).validate()
    result: SearchResult = _RUNNERS[task.method](config, train)
    held_metrics = evaluate_model(result.model, evals[task.held_out])
    in_domain = [evaluate_model(result.model, evals[d]) for d in sorted(train)]
    return {
        "method": task.method,
        "seed": task.seed,
        "held_out": task.held_out,
        "dice": held_metrics["dice"],
        "auc": held_metrics["auc"],
        "in_domain_dice": float(np.mean([m["dice"] for m in in_domain])),
        "best_reward": result.report.best_reward,
    }


def run_trend_experiment(
    seeds=(0, 1, 2, 3, 4),
    config: SearchConfig | None = None,
    methods=METHODS,
    held_out_domains=None,
    train_count: int = 10,
    eval_count: int = 6,
) -> list[dict]:
    config = config or trend_config()
    if held_out_domains is None:
        held_out_domains = [s.domain_id for s in default_domain_specs()]
    tasks = [
        TrendTask(method, seed, held, config, train_count, eval_count, config.image_size)
        for method in methods
        for seed in seeds
        for held in held_out_domains
    ]
    return parallel_map(run_trend_task, tasks)


def summarize_trend(results: list[dict]) -> dict[str, dict[str, float]]:
    """Per-method means of held-out and in-domain Dice."""
    summary = {}
    for method in {r["method"] for r in results}:
        rows = [r for r in results if r["method"] == method]
        summary[method] = {
            "dice": float(np.mean([r["dice"] for r in rows])),
            "in_domain_dice": float(np.mean([r["in_domain_dice"] for r in rows])),
            "runs": len(rows),
        }
    return summary
