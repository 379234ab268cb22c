"""Procedural multi-domain segmentation benchmark and evaluation metrics.

Each domain renders vessel-like random curves over a domain-specific
background (palette, gradient, texture, global brightness/contrast, noise),
so domains differ in first-order channel statistics while sharing the same
segmentation task.  Metrics: Dice, pixel accuracy, and rank-based AUC-ROC.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .transforms import Image


@dataclass(frozen=True)
class DomainSpec:
    """Rendering recipe for one source domain."""

    domain_id: int
    base_rgb: tuple[float, float, float]  # background color, each in [0, 255]
    gradient_strength: float  # intensity drop across the diagonal, [0, 80]
    gradient_angle: float  # radians
    fg_rgb: tuple[float, float, float]  # vessel color before global shifts
    fg_jitter: float  # per-curve color jitter, [0, 40]
    brightness_offset: float  # added after compositing, [-60, 60]
    contrast_scale: float  # applied around 128 after compositing, [0.5, 1.5]
    noise_sigma: float  # additive gaussian noise, [0, 25]
    texture_freq: float  # sinusoidal texture cycles per image, [0, 16]
    texture_amp: float  # texture amplitude, [0, 30]

    def __post_init__(self):
        checks = [
            all(0 <= v <= 255 for v in self.base_rgb),
            all(0 <= v <= 255 for v in self.fg_rgb),
            0 <= self.gradient_strength <= 80,
            0 <= self.fg_jitter <= 40,
            -60 <= self.brightness_offset <= 60,
            0.5 <= self.contrast_scale <= 1.5,
            0 <= self.noise_sigma <= 25,
            0 <= self.texture_freq <= 16,
            0 <= self.texture_amp <= 30,
        ]
        if not all(checks):
            raise ValueError(f"domain spec parameters out of range: {self}")


@dataclass
class LabeledSample:
    image: Image  # carries the exact foreground mask
    domain_id: int


FG_FRACTION_RANGE = (0.02, 0.3)


def default_domain_specs() -> list[DomainSpec]:
    """Four stock domains with strongly shifted channel statistics.

    Domains 0 and 1 render high-contrast dark vessels on warm/green
    backgrounds; domain 2 is a washed-out bright acquisition with weak
    vessel contrast; domain 3 is dim and low-contrast overall.  The last two
    are the kinds of photometric shift that brightness/contrast/color
    augmentation can simulate, but a model trained only on the high-contrast
    domains never sees.
    """
    return [
        DomainSpec(0, (205, 172, 142), 24, 0.6, (96, 38, 30), 14, 10, 1.05, 6, 3.0, 12),
        DomainSpec(1, (120, 152, 118), 32, 2.2, (46, 60, 28), 12, -18, 0.90, 9, 7.0, 16),
        DomainSpec(2, (196, 200, 212), 18, 4.0, (128, 130, 150), 8, 14, 0.95, 5, 5.0, 8),
        DomainSpec(3, (172, 166, 158), 30, 1.2, (74, 62, 58), 10, -55, 0.52, 8, 7.0, 10),
    ]


def _render_background(spec: DomainSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    proj = (np.cos(spec.gradient_angle) * xx + np.sin(spec.gradient_angle) * yy)
    proj = proj / (np.sqrt(2.0) * size) - 0.5
    phase = rng.uniform(0, 2 * np.pi)
    texture = spec.texture_amp * np.sin(
        2 * np.pi * spec.texture_freq * (xx + yy) / (2 * size) + phase
    )
    img = np.empty((size, size, 3))
    for c in range(3):
        img[..., c] = spec.base_rgb[c] + spec.gradient_strength * proj + texture
    return img


def _paint_curves(
    canvas: np.ndarray, spec: DomainSpec, rng: np.random.Generator
) -> np.ndarray:
    """Draw vessel-like random-walk curves; returns the exact support mask."""
    size = canvas.shape[0]
    mask = np.zeros((size, size), dtype=bool)
    lo, hi = FG_FRACTION_RANGE
    yy, xx = np.mgrid[0:size, 0:size]
    n_curves = int(rng.integers(3, 6))
    drawn = 0
    while True:
        pos = rng.uniform(0.1 * size, 0.9 * size, size=2)
        heading = rng.uniform(0, 2 * np.pi)
        length = int(rng.uniform(0.9, 1.7) * size)
        width0 = rng.uniform(1.2, 2.2) * size / 64.0
        wobble = rng.uniform(0.5, 1.5)
        color = np.clip(
            np.array(spec.fg_rgb) + rng.uniform(-spec.fg_jitter, spec.fg_jitter, 3),
            0,
            255,
        )
        for step in range(length):
            heading += rng.normal(0.0, 0.22)
            pos = pos + np.array([np.cos(heading), np.sin(heading)])
            pos = np.clip(pos, 1.0, size - 2.0)
            radius = max(width0 * (1.0 + 0.45 * np.sin(step * wobble / 9.0)), 0.6)
            x0, y0 = pos
            xi0, xi1 = int(max(x0 - radius - 1, 0)), int(min(x0 + radius + 2, size))
            yi0, yi1 = int(max(y0 - radius - 1, 0)), int(min(y0 + radius + 2, size))
            patch = (xx[yi0:yi1, xi0:xi1] - x0) ** 2 + (yy[yi0:yi1, xi0:xi1] - y0) ** 2
            disk = patch <= radius * radius
            mask[yi0:yi1, xi0:xi1] |= disk
            region = canvas[yi0:yi1, xi0:xi1]
            region[disk] = color
        drawn += 1
        frac = mask.mean()
        if drawn >= n_curves and frac >= lo:
            break
        if frac > hi or drawn > 12:
            break
    return mask


def generate_domain(
    spec: DomainSpec, count: int, rng: np.random.Generator, size: int = 64
) -> list[LabeledSample]:
    """Render `count` labeled samples; deterministic for a given generator state."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    lo, hi = FG_FRACTION_RANGE
    samples = []
    for _ in range(count):
        for _attempt in range(20):
            canvas = _render_background(spec, size, rng)
            mask = _paint_curves(canvas, spec, rng)
            frac = mask.mean()
            if lo <= frac <= hi:
                break
        else:
            raise RuntimeError(
                f"could not render a sample with foreground fraction in [{lo}, {hi}]"
            )
        canvas = (canvas - 128.0) * spec.contrast_scale + 128.0 + spec.brightness_offset
        canvas = canvas + rng.normal(0.0, spec.noise_sigma, canvas.shape)
        pixels = np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)
        samples.append(LabeledSample(Image(pixels, mask), spec.domain_id))
    return samples


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def dice(pred: np.ndarray, gt: np.ndarray) -> float:
    """2|P & G| / (|P| + |G|); two empty masks score 1.0 by convention."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    denom = pred.sum() + gt.sum()
    if denom == 0:
        return 1.0
    return float(2.0 * np.logical_and(pred, gt).sum() / denom)


def accuracy(pred: np.ndarray, gt: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return float((pred == gt).mean())


def auc_roc(scores: np.ndarray, gt: np.ndarray) -> float:
    """Mann-Whitney rank AUC with midrank tie handling.

    Returns NaN (the undefined-metric flag) when the ground truth contains a
    single class.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(gt, dtype=bool).ravel()
    if s.shape != y.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {y.shape}")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    uniq, inv, counts = np.unique(s, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    midranks = upper - (counts - 1) / 2.0
    ranks = midranks[inv]
    pos_sum = ranks[y].sum()
    return float((pos_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# leave-one-domain-out protocol
# ---------------------------------------------------------------------------


@dataclass
class MetricsRow:
    held_out: int | str
    dice: float
    accuracy: float
    auc: float


def leave_one_domain_out(
    specs: list[DomainSpec],
    runner,
    train_count: int = 12,
    eval_count: int = 8,
    seed: int = 0,
    size: int = 64,
    threshold: float = 0.5,
) -> list[MetricsRow]:
    """For each domain: train `runner` on the remaining domains and score the
    held-out one.  Returns one row per held-out domain plus an average row.

    `runner(train_sets, seed)` must return a predictor mapping a LabeledSample
    to per-pixel foreground scores in [0, 1].
    """
    if len(specs) < 3:
        raise ValueError(f"leave-one-domain-out needs >= 3 domains, got {len(specs)}")
    ids = [s.domain_id for s in specs]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate domain ids: {ids}")
    ss = np.random.SeedSequence(seed)
    gen_seeds = {s.domain_id: child for s, child in zip(specs, ss.spawn(len(specs)))}
    train_data = {
        s.domain_id: generate_domain(s, train_count, np.random.default_rng(gen_seeds[s.domain_id]), size)
        for s in specs
    }
    eval_ss = np.random.SeedSequence((seed, 1))
    eval_seeds = {s.domain_id: child for s, child in zip(specs, eval_ss.spawn(len(specs)))}
    eval_data = {
        s.domain_id: generate_domain(s, eval_count, np.random.default_rng(eval_seeds[s.domain_id]), size)
        for s in specs
    }
    rows: list[MetricsRow] = []
    for spec in specs:
        held = spec.domain_id
        train_sets = {d: v for d, v in train_data.items() if d != held}
        predictor = runner(train_sets, seed)
        dices, accs, aucs = [], [], []
        for sample in eval_data[held]:
            scores = np.asarray(predictor(sample), dtype=np.float64)
            gt = sample.image.mask
            pred = scores >= threshold
            dices.append(dice(pred, gt))
            accs.append(accuracy(pred, gt))
            a = auc_roc(scores, gt)
            if not np.isnan(a):
                aucs.append(a)
        rows.append(
            MetricsRow(
                held,
                float(np.mean(dices)),
                float(np.mean(accs)),
                float(np.mean(aucs)) if aucs else float("nan"),
            )
        )
    rows.append(
        MetricsRow(
            "average",
            float(np.mean([r.dice for r in rows])),
            float(np.mean([r.accuracy for r in rows])),
            float(np.mean([r.auc for r in rows])),
        )
    )
    return rows


def metrics_to_csv(rows: list[MetricsRow]) -> str:
    lines = ["held_out,dice,accuracy,auc"]
    for r in rows:
        lines.append(f"{r.held_out},{r.dice:.6f},{r.accuracy:.6f},{r.auc:.6f}")
    return "\n".join(lines) + "\n"


def spec_to_dict(spec: DomainSpec) -> dict:
    return asdict(spec)
