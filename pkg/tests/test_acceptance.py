"""Acceptance gate: every criterion at its stated tolerance, one printed
PASS/FAIL line per criterion (run with -s to see them).

The leave-one-domain-out benchmark at the bottom is the heavy entry; it fans
out over worker processes (capped by AADG_THREADS).
"""

import json
import time
from dataclasses import replace

import numpy as np
import pytest

from aadg.bench import default_domain_specs, generate_domain
from aadg.cli import main as cli_main
from aadg.controller import Controller, normalize_rewards
from aadg.experiments import run_trend_task, summarize_trend, trend_config, TrendTask
from aadg.nets import (
    DomainClassifier,
    SegModel,
    domain_loss_and_grads,
    grad_check,
    seg_loss_and_grads,
)
from aadg.ot import EmbeddingBatch, cosine_cost, exact_ot, sinkhorn
from aadg.rng import SplitMix64
from aadg.search import SearchConfig, run_with_forced_policies
from aadg.transforms import (
    OP_ORDER,
    Image,
    OpKind,
    Operation,
    Policy,
    SubPolicy,
    apply_op,
    identity_policy,
)
from aadg.util import parallel_map


def report(name: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# OT correctness
# ---------------------------------------------------------------------------


def test_ot_correctness_against_exact_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_gap = 0.0
    worst_dominance = np.inf
    for i in range(200):
        m = int(rng.integers(2, 7))
        n = int(rng.choice([3, 8, 32]))
        a = rng.normal(size=(m, n))
        b = rng.normal(size=(m, n))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        C = cosine_cost(EmbeddingBatch(a, 0), EmbeddingBatch(b, 1))
        lp = exact_ot(C)
        d = sinkhorn(C, epsilon=1e-3, max_iters=5000).distance
        worst_gap = max(worst_gap, abs(d - lp))
        worst_dominance = min(worst_dominance, d - lp)
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-2 and worst_dominance >= -1e-9 and elapsed < 10.0
    report(
        "ot-correctness",
        ok,
        f"200 instances, worst |sinkhorn-exact| {worst_gap:.2e}, "
        f"worst dominance margin {worst_dominance:.2e}, {elapsed:.1f}s (<10s)",
    )


# ---------------------------------------------------------------------------
# kernel conformance
# ---------------------------------------------------------------------------


def _random_images(count: int, size: int = 32):
    master = np.random.default_rng(777)
    for _ in range(count):
        px = master.integers(0, 256, size=(size, size, 3)).astype(np.uint8)
        mask = master.random((size, size)) < 0.2
        yield Image(px, mask)


def test_kernel_conformance_properties():
    failures = []
    inv = Operation(OpKind.INVERT, 0, 10)
    post8 = Operation(OpKind.POSTERIZE, 9, 10)
    sol256 = Operation(OpKind.SOLARIZE, 9, 10)
    eq = Operation(OpKind.EQUALIZE, 0, 10)
    ac = Operation(OpKind.AUTO_CONTRAST, 0, 10)
    for idx, img in enumerate(_random_images(100)):
        mask_before = img.mask.copy()
        # dimension preservation + range safety + mask immutability, all kinds
        for kind in OP_ORDER:
            for level in (0, 4, 9):
                out = apply_op(img, Operation(kind, level, 10), SplitMix64(idx))
                if out.pixels.shape != img.pixels.shape or out.pixels.dtype != np.uint8:
                    failures.append((idx, kind.value, "shape/dtype"))
                if not np.array_equal(out.mask, mask_before):
                    failures.append((idx, kind.value, "mask"))
        # involution and identity levels
        if not np.array_equal(
            apply_op(apply_op(img, inv, SplitMix64(0)), inv, SplitMix64(0)).pixels, img.pixels
        ):
            failures.append((idx, "Invert", "involution"))
        for op in (post8, sol256):
            if not np.array_equal(apply_op(img, op, SplitMix64(0)).pixels, img.pixels):
                failures.append((idx, op.kind.value, "identity level"))
        # idempotence
        for op in (eq, ac):
            once = apply_op(img, op, SplitMix64(0))
            twice = apply_op(once, op, SplitMix64(0))
            if not np.array_equal(once.pixels, twice.pixels):
                failures.append((idx, op.kind.value, "idempotence"))
    ok = not failures
    report(
        "kernel-conformance",
        ok,
        "100 seeded images x all kinds: properties hold" if ok else f"failures: {failures[:5]}",
    )


def test_kernel_conformance_golden_regeneration(tmp_path):
    out1, out2 = tmp_path / "g1", tmp_path / "g2"
    assert cli_main(["export-golden", "--out", str(out1)]) == 0
    assert cli_main(["export-golden", "--out", str(out2)]) == 0
    files = sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file())
    identical = all((out1 / f).read_bytes() == (out2 / f).read_bytes() for f in files)
    ok = identical and len(files) == 1 + 5 + 150
    report(
        "golden-regeneration",
        ok,
        f"{len(files)} files regenerated byte-identical" if ok else "regeneration differs",
    )


# ---------------------------------------------------------------------------
# gradient suite
# ---------------------------------------------------------------------------


def test_gradient_suite():
    worst = {"seg": 0.0, "domain": 0.0, "controller": 0.0}
    for draw in range(10):
        rng = np.random.default_rng(1000 + draw)
        model = SegModel(seed=1000 + draw)
        images = rng.random((2, 3, 8, 8))
        masks = (rng.random((2, 8, 8)) < 0.4).astype(np.float64)

        def seg_fn(params):
            model.params = params
            return seg_loss_and_grads(model, images, masks)

        worst["seg"] = max(worst["seg"], grad_check(seg_fn, model.params, num_coords=50, rng=rng))

        clf = DomainClassifier(3, embedding_dim=8, seed=1000 + draw)
        feats = rng.random((4, 32, 2, 2))
        z = np.eye(3)[rng.integers(0, 3, size=4)]

        def dom_fn(params):
            clf.params = params
            loss, grads, _ = domain_loss_and_grads(clf, feats, z)
            return loss, grads

        worst["domain"] = max(worst["domain"], grad_check(dom_fn, clf.params, num_coords=50, rng=rng))

        ctrl = Controller(R=3, S=1, L=2, ops=OP_ORDER[:4], hidden=4, emb_size=3, seed=1000 + draw)
        _, traces = ctrl.sample_policies(1, rng)
        tokens = traces[0].tokens

        def ctrl_fn(params):
            ctrl.params = params
            return ctrl.logprob_and_grads(tokens)

        worst["controller"] = max(
            worst["controller"], grad_check(ctrl_fn, ctrl.params, num_coords=50, rng=rng)
        )
    ok = all(v < 1e-3 for v in worst.values())
    report(
        "gradient-suite",
        ok,
        "10 draws each, worst rel errors "
        + ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
        + " (<1e-3)",
    )


# ---------------------------------------------------------------------------
# reward normalization
# ---------------------------------------------------------------------------


def test_reward_normalization():
    rng = np.random.default_rng(5)
    worst_mean, worst_var = 0.0, 0.0
    for _ in range(100):
        rewards = rng.normal(size=6) * rng.uniform(0.1, 50)
        if np.ptp(rewards) == 0:
            rewards[0] += 1.0
        normalized = normalize_rewards(rewards)
        worst_mean = max(worst_mean, abs(float(normalized.mean())))
        worst_var = max(worst_var, abs(float(normalized.var()) - 1.0))
    ok = worst_mean < 1e-9 and worst_var < 1e-6
    report(
        "reward-normalization",
        ok,
        f"100 vectors (B=6): worst |mean| {worst_mean:.1e} (<1e-9), "
        f"worst |var-1| {worst_var:.1e} (<1e-6)",
    )


# ---------------------------------------------------------------------------
# bandit convergence
# ---------------------------------------------------------------------------


def _bandit_trial(seed: int, designated=(3, 4), updates=500, check_every=25):
    ctrl = Controller(R=10, S=1, L=1, seed=seed)
    rng = np.random.default_rng(seed + 10_000)
    for step in range(1, updates + 1):
        _, traces = ctrl.sample_policies(6, rng)
        rewards = [
            float(t.tokens[0] == designated[0] and t.tokens[1] == designated[1])
            for t in traces
        ]
        ctrl.reinforce_update(traces, rewards)
        if step % check_every == 0 and ctrl.most_likely_pair() == designated:
            return step
    return None


def test_bandit_convergence():
    t0 = time.perf_counter()
    results = [_bandit_trial(seed) for seed in range(10)]
    elapsed = time.perf_counter() - t0
    wins = sum(r is not None for r in results)
    ok = wins >= 9 and elapsed < 120.0
    report(
        "bandit-convergence",
        ok,
        f"{wins}/10 seeds modal within 500 updates "
        f"(steps: {results}), {elapsed:.1f}s (<2min)",
    )


# ---------------------------------------------------------------------------
# weaker invariance
# ---------------------------------------------------------------------------


def _weaker_invariance_trial(seed: int) -> bool:
    cfg = SearchConfig(
        R=10, S=2, L=2, B=2, epochs=1, steps_per_epoch=5, K=3,
        batch_size=6, image_size=32, seed=seed, sinkhorn_max_iters=300,
    ).validate()
    specs = default_domain_specs()[:3]
    ss = np.random.SeedSequence((seed, 77))
    datasets = {
        s.domain_id: generate_domain(s, 8, np.random.default_rng(c), 32)
        for s, c in zip(specs, ss.spawn(3))
    }
    dark_op = Operation(OpKind.BRIGHTNESS, 0, cfg.R)
    dark = Policy(tuple(SubPolicy((dark_op,) * cfg.L) for _ in range(cfg.S)), cfg.R)
    ident = identity_policy(cfg.R, cfg.S, cfg.L)
    rewards = run_with_forced_policies(cfg, datasets, [ident, dark]).report.epochs[-1].rewards_raw
    return rewards[0] > rewards[1]


def test_weaker_invariance_property():
    t0 = time.perf_counter()
    wins = sum(_weaker_invariance_trial(seed) for seed in range(20))
    elapsed = time.perf_counter() - t0
    ok = wins >= 19 and elapsed < 300.0
    report(
        "weaker-invariance",
        ok,
        f"identity reward beat darkest-brightness in {wins}/20 trials, "
        f"{elapsed:.0f}s (<5min)",
    )


# ---------------------------------------------------------------------------
# reproducibility
# ---------------------------------------------------------------------------


def test_search_reproducibility(tmp_path):
    config = {
        "R": 10, "S": 2, "L": 1, "B": 2, "epochs": 1, "steps_per_epoch": 2,
        "K": 2, "batch_size": 4, "image_size": 16, "seed": 99,
        "train_count": 3, "eval_count": 2,
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config), encoding="utf-8")
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert cli_main(["search", "--config", str(cfg_path), "--out", str(out1)]) == 0
    assert cli_main(["search", "--config", str(cfg_path), "--out", str(out2)]) == 0
    b1 = (out1 / "report.json").read_bytes()
    b2 = (out2 / "report.json").read_bytes()
    ok = b1 == b2
    report(
        "reproducibility",
        ok,
        f"two cmd_search runs, report.json {len(b1)} bytes byte-identical" if ok
        else "reports differ",
    )


# ---------------------------------------------------------------------------
# desk-scale trend (baseline <= RADG <= AADG)
# ---------------------------------------------------------------------------

TREND_SEEDS = (0, 1, 2, 3, 4)


@pytest.fixture(scope="session")
def trend_results():
    config = trend_config()
    tasks = [
        TrendTask(method, seed, held, config, train_count=10, eval_count=6,
                  size=config.image_size)
        for method in ("baseline", "radg", "aadg")
        for seed in TREND_SEEDS
        for held in (0, 1, 2, 3)
    ]
    t0 = time.perf_counter()
    results = parallel_map(run_trend_task, tasks)
    return results, time.perf_counter() - t0


def test_trend_direction(trend_results):
    results, elapsed = trend_results
    summary = summarize_trend(results)
    base = summary["baseline"]["dice"]
    radg = summary["radg"]["dice"]
    aadg = summary["aadg"]["dice"]
    ok = (aadg >= radg >= base) and (aadg - base >= 0.01) and elapsed < 1800.0
    report(
        "table-v-trend",
        ok,
        f"mean held-out Dice over {len(TREND_SEEDS)} seeds x 4 rotations: "
        f"baseline {base:.4f} <= radg {radg:.4f} <= aadg {aadg:.4f}, "
        f"aadg-baseline {aadg - base:+.4f} (>=0.01), {elapsed:.0f}s (<30min)",
    )


def test_benchmark_generalization_gap(trend_results):
    # supporting invariant: the no-augmentation baseline generalizes worse
    # across domains than within them
    results, _ = trend_results
    rows = [r for r in results if r["method"] == "baseline"]
    gap = float(np.mean([r["in_domain_dice"] - r["dice"] for r in rows]))
    ok = gap >= 0.02
    report(
        "generalization-gap",
        ok,
        f"baseline in-domain minus held-out Dice gap {gap:+.4f} (>=0.02)",
    )
