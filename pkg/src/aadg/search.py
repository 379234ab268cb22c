"""Joint adversarial loop: segmentation model, domain classifier, and policy
controller trained together, with per-policy moving-average diversity rewards.

One epoch: sample B policies, run T inner steps (balanced mini-batch, B
augmented copies, classifier update then segmentation update, running-mean
diversity per policy), then update the controller on the normalized rewards.
The RADG ablation runs the identical loop with uniform policy draws and the
controller frozen.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, replace

import numpy as np

from . import nets
from .bench import LabeledSample
from .controller import Controller, SampleTrace, normalize_rewards
from .nets import AdamState, DomainClassifier, SegModel, TrainBatch, adam_step
from .ot import diversity_loss
from .rng import SplitMix64
from .transforms import (
    OP_ORDER,
    Image,
    OpKind,
    Operation,
    Policy,
    SubPolicy,
    apply_policy,
    identity_policy,
    policy_to_dict,
)

DEFAULT_OPS = tuple(kind.value for kind in OP_ORDER)


class ConfigError(ValueError):
    """Configuration rejected; `.field` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field {field_name!r}: {message}")
        self.field = field_name


@dataclass
class SearchConfig:
    """Full experiment configuration; see docs/formats.md for the file schema."""

    R: int = 10
    S: int = 5
    L: int = 2
    B: int = 6
    epochs: int = 60  # controller epochs (E)
    steps_per_epoch: int = 25  # inner steps per epoch (T)
    K: int = 4  # source domains
    batch_size: int = 12
    image_size: int = 64
    lr_model: float = 0.001
    lr_controller: float = 0.00035
    sinkhorn_epsilon: float = 0.05
    sinkhorn_max_iters: int = 500
    sinkhorn_tol: float = 1e-6
    algorithm: str = "reinforce"  # "reinforce" | "ppo"
    ppo_clip: float = 0.2
    seed: int = 0
    ops: tuple[str, ...] = DEFAULT_OPS
    embedding_dim: int = 32
    update_domain_classifier: bool = True
    default_aug: bool = True
    dtype: str = "float64"  # network parameter precision: float64 | float32

    def validate(self) -> "SearchConfig":
        positive = ["R", "S", "L", "B", "epochs", "steps_per_epoch", "K",
                    "batch_size", "image_size", "embedding_dim"]
        for name in positive:
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(name, f"must be a positive integer, got {value!r}")
        if self.R < 2:
            raise ConfigError("R", f"must be >= 2, got {self.R}")
        if self.K < 2:
            raise ConfigError("K", f"must be >= 2, got {self.K}")
        if self.image_size % 8:
            raise ConfigError("image_size", f"must be a multiple of 8, got {self.image_size}")
        for name in ["lr_model", "lr_controller", "sinkhorn_epsilon", "sinkhorn_tol", "ppo_clip"]:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or value <= 0:
                raise ConfigError(name, f"must be positive, got {value!r}")
        if not isinstance(self.sinkhorn_max_iters, int) or self.sinkhorn_max_iters < 1:
            raise ConfigError("sinkhorn_max_iters", f"must be a positive integer")
        if self.algorithm not in ("reinforce", "ppo"):
            raise ConfigError("algorithm", f"must be 'reinforce' or 'ppo', got {self.algorithm!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", f"must be a nonnegative integer, got {self.seed!r}")
        valid_ops = {kind.value for kind in OpKind}
        if not self.ops or not set(self.ops) <= valid_ops:
            raise ConfigError("ops", f"must be a non-empty subset of {sorted(valid_ops)}")
        if len(set(self.ops)) != len(self.ops):
            raise ConfigError("ops", "contains duplicates")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError("dtype", f"must be 'float64' or 'float32', got {self.dtype!r}")
        return self

    def op_kinds(self) -> tuple[OpKind, ...]:
        by_name = {kind.value: kind for kind in OpKind}
        return tuple(by_name[name] for name in self.ops)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ops"] = list(self.ops)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SearchConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config document must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        kwargs = dict(data)
        if "ops" in kwargs:
            if not isinstance(kwargs["ops"], (list, tuple)):
                raise ConfigError("ops", "must be a list of op names")
            kwargs["ops"] = tuple(kwargs["ops"])
        return cls(**kwargs).validate()

    @classmethod
    def desk_default(cls) -> "SearchConfig":
        return cls()

    @classmethod
    def paper_preset(cls, task: str = "vessel") -> "SearchConfig":
        """Full-scale presets retained for reference runs."""
        if task == "vessel":
            return cls(epochs=300, batch_size=24, image_size=512)
        if task == "odoc":
            return cls(epochs=150, batch_size=24, image_size=256)
        raise ConfigError("task", f"unknown preset {task!r}")


@dataclass
class EpochRecord:
    epoch: int
    policies: list[dict]
    rewards_raw: list[float]
    rewards_normalized: list[float]
    diversity_steps: list[list[float]]
    mean_seg_loss: float
    mean_domain_loss: float


@dataclass
class RunReport:
    method: str
    config: dict
    domain_ids: list[int]
    epochs: list[EpochRecord]
    best_policy: dict
    best_reward: float
    held_out: dict | None
    wall_clock_seconds: float
    version: int = 1

    def to_json_dict(self, include_timing: bool = False) -> dict:
        d = {
            "version": self.version,
            "method": self.method,
            "config": self.config,
            "domain_ids": self.domain_ids,
            "epochs": [dataclasses.asdict(e) for e in self.epochs],
            "best_policy": self.best_policy,
            "best_reward": self.best_reward,
            "held_out": self.held_out,
        }
        if include_timing:
            d["wall_clock_seconds"] = self.wall_clock_seconds
        return d

    def to_json(self) -> str:
        """Canonical serialization: byte-identical across identical seeded runs,
        so timing stays out (it goes in the run's meta file)."""
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        lines = ["epoch,reward_mean,reward_max,reward_min,seg_loss,domain_loss"]
        for e in self.epochs:
            r = np.asarray(e.rewards_raw)
            lines.append(
                f"{e.epoch},{r.mean():.6f},{r.max():.6f},{r.min():.6f},"
                f"{e.mean_seg_loss:.6f},{e.mean_domain_loss:.6f}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class SearchResult:
    model: SegModel
    classifier: DomainClassifier
    controller: Controller
    report: RunReport


def update_running_reward(current: float, new_value: float, t: int) -> float:
    """Arithmetic running mean after t observations (t >= 1)."""
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    return current + (new_value - current) / t


def uniform_policy(
    R: int, S: int, L: int, ops: tuple[OpKind, ...], rng: np.random.Generator
) -> Policy:
    """One policy drawn uniformly from the search space."""
    subpolicies = []
    for _ in range(S):
        chain = tuple(
            Operation(ops[int(rng.integers(len(ops)))], int(rng.integers(R)), R)
            for _ in range(L)
        )
        subpolicies.append(SubPolicy(chain))
    return Policy(tuple(subpolicies), R)


# ---------------------------------------------------------------------------
# batching and default augmentations
# ---------------------------------------------------------------------------


def _draw_balanced(
    datasets: dict[int, list[LabeledSample]],
    batch_size: int,
    rng: np.random.Generator,
) -> list[LabeledSample]:
    ids = sorted(datasets)
    base = batch_size // len(ids)
    extra = batch_size % len(ids)
    out = []
    for pos, d in enumerate(ids):
        n = base + (1 if pos < extra else 0)
        pool = datasets[d]
        idx = rng.choice(len(pool), size=n, replace=n > len(pool))
        out.extend(pool[int(i)] for i in idx)
    return out


def default_augment(sample: LabeledSample, rng: np.random.Generator) -> LabeledSample:
    """Mask-synchronized scale/crop/rotate/flip jitter applied to every batch
    before policy augmentation; geometry only, all nearest-neighbor."""
    px = sample.image.pixels
    mask = sample.image.mask
    h, w = px.shape[:2]
    s = rng.uniform(0.8, 1.0)
    ch = max(int(round(s * h)), 8)
    cw = max(int(round(s * w)), 8)
    y0 = int(rng.integers(0, h - ch + 1))
    x0 = int(rng.integers(0, w - cw + 1))
    px = px[y0 : y0 + ch, x0 : x0 + cw]
    mask = mask[y0 : y0 + ch, x0 : x0 + cw] if mask is not None else None
    iy = np.minimum((np.arange(h) + 0.5) * ch / h, ch - 1).astype(np.int64)
    ix = np.minimum((np.arange(w) + 0.5) * cw / w, cw - 1).astype(np.int64)
    px = px[iy][:, ix]
    mask = mask[iy][:, ix] if mask is not None else None
    k = int(rng.integers(0, 4))
    if k:
        px = np.rot90(px, k, axes=(0, 1))
        mask = np.rot90(mask, k, axes=(0, 1)) if mask is not None else None
    if rng.random() < 0.5:
        px = px[:, ::-1]
        mask = mask[:, ::-1] if mask is not None else None
    return LabeledSample(
        Image(np.ascontiguousarray(px), np.ascontiguousarray(mask) if mask is not None else None),
        sample.domain_id,
    )


def _to_arrays(samples: list[LabeledSample], codes: dict[int, int]):
    x = np.stack([s.image.pixels for s in samples]).astype(np.float64) / 255.0
    x = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
    y = np.stack([s.image.mask.astype(np.float64) for s in samples])
    ids = np.array([codes[s.domain_id] for s in samples])
    z = np.zeros((len(samples), len(codes)))
    z[np.arange(len(samples)), ids] = 1.0
    return x, y, z, ids


def evaluate_model(model: SegModel, samples: list[LabeledSample], threshold: float = 0.5) -> dict:
    """Mean Dice/accuracy/AUC of sigmoid scores against the sample masks."""
    from .bench import accuracy, auc_roc, dice

    dices, accs, aucs = [], [], []
    for s in samples:
        x = s.image.pixels.astype(np.float64)[None] / 255.0
        x = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
        scores = model.predict_proba(x)[0]
        pred = scores >= threshold
        dices.append(dice(pred, s.image.mask))
        accs.append(accuracy(pred, s.image.mask))
        a = auc_roc(scores, s.image.mask)
        if not np.isnan(a):
            aucs.append(a)
    return {
        "dice": float(np.mean(dices)),
        "accuracy": float(np.mean(accs)),
        "auc": float(np.mean(aucs)) if aucs else float("nan"),
    }


# ---------------------------------------------------------------------------
# the joint loop
# ---------------------------------------------------------------------------


def run_search(
    config: SearchConfig,
    datasets: dict[int, list[LabeledSample]],
    eval_datasets: dict[int, list[LabeledSample]] | None = None,
) -> SearchResult:
    """Adversarial policy search (controller-driven sampling)."""
    return _run(config, datasets, eval_datasets, method="aadg")


def run_radg(
    config: SearchConfig,
    datasets: dict[int, list[LabeledSample]],
    eval_datasets: dict[int, list[LabeledSample]] | None = None,
) -> SearchResult:
    """Ablation baseline: uniform policy draws, controller never updated."""
    return _run(config, datasets, eval_datasets, method="radg")


def run_baseline(
    config: SearchConfig,
    datasets: dict[int, list[LabeledSample]],
    eval_datasets: dict[int, list[LabeledSample]] | None = None,
) -> SearchResult:
    """No-augmentation reference: a single pixel-identity policy per epoch."""
    return _run(config, datasets, eval_datasets, method="baseline")


def _run(config, datasets, eval_datasets, method, forced_policies=None):
    config.validate()
    if len(datasets) < 2:
        raise ValueError(f"need >= 2 source domains, got {len(datasets)}")
    for d, samples in datasets.items():
        if not samples:
            raise ValueError(f"source domain {d} is empty")
    if len(datasets) != config.K:
        raise ValueError(f"config.K={config.K} but {len(datasets)} domains supplied")

    domain_ids = sorted(datasets)
    codes = {d: i for i, d in enumerate(domain_ids)}
    streams = seed_streams(config.seed)

    dtype = np.dtype(config.dtype)
    model = SegModel(seed=_seed_int(streams["model"]), dtype=dtype)
    classifier = DomainClassifier(
        config.K, config.embedding_dim, seed=_seed_int(streams["classifier"]), dtype=dtype
    )
    controller = Controller(
        R=config.R, S=config.S, L=config.L, ops=config.op_kinds(),
        seed=_seed_int(streams["controller"]), lr=config.lr_controller,
    )
    opt_model = AdamState(model.params)
    opt_clf = AdamState(classifier.params)
    batch_rng = np.random.default_rng(streams["batch"])
    aug_rng = np.random.default_rng(streams["augment"])
    sample_rng = np.random.default_rng(streams["sample"])
    uniform_rng = np.random.default_rng(streams["uniform"])
    policy_stream = SplitMix64(_seed_int(streams["policy"]))

    if method == "baseline":
        config = replace(config, B=1)
        forced = [identity_policy(config.R, config.S, config.L)]
    else:
        forced = forced_policies
    B = config.B

    t0 = time.perf_counter()
    epoch_records: list[EpochRecord] = []
    for epoch in range(1, config.epochs + 1):
        if forced is not None:
            policies = list(forced)
            traces: list[SampleTrace] = []
        elif method == "radg":
            policies = [
                uniform_policy(config.R, config.S, config.L, controller.ops, uniform_rng)
                for _ in range(B)
            ]
            traces = []
        else:
            policies, traces = controller.sample_policies(B, sample_rng)
        if len(policies) != B:
            raise ValueError(f"expected {B} policies, got {len(policies)}")

        ell_div = [0.0] * B
        div_steps: list[list[float]] = [[] for _ in range(B)]
        seg_losses: list[float] = []
        dom_losses: list[float] = []

        for t in range(1, config.steps_per_epoch + 1):
            raw = _draw_balanced(datasets, config.batch_size, batch_rng)
            if config.default_aug:
                raw = [default_augment(s, aug_rng) for s in raw]
            _, y, z, ids = _to_arrays(raw, codes)
            y = y.astype(dtype)
            z = z.astype(dtype)

            # all B copies ride one forward/backward; the mean loss over the
            # stacked batch equals the average of per-copy means, so the
            # gradient is exactly the per-copy average
            n = len(raw)
            copies = []
            for b in range(B):
                copies.extend(
                    apply_policy(s.image, policies[b], SplitMix64(policy_stream.next_u64()))[0]
                    for s in raw
                )
            x = np.stack([im.pixels for im in copies]).astype(dtype) / dtype.type(255)
            x = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
            y_all = np.tile(y, (B, 1, 1))
            z_all = np.tile(z, (B, 1))
            logits, cache = model.forward(x)
            loss_h, dpix = nets.bce_with_logits(logits[:, 0], y_all)
            gw = model.backward(dpix[:, None], cache)
            loss_c, gphi, emb = nets.domain_loss_and_grads(classifier, cache["features"], z_all)
            for b in range(B):
                emb_b = emb[b * n : (b + 1) * n]
                batches = [_embedding_batch(emb_b, ids, code) for code in range(config.K)]
                div = diversity_loss(
                    batches,
                    epsilon=config.sinkhorn_epsilon,
                    max_iters=config.sinkhorn_max_iters,
                    tol=config.sinkhorn_tol,
                )
                ell_div[b] = update_running_reward(ell_div[b], div, t)
                div_steps[b].append(float(div))
            # classifier first, then segmentation model; the seg loss does not
            # depend on the classifier so the precomputed gradients stay valid
            if config.update_domain_classifier:
                adam_step(classifier.params, gphi, opt_clf, config.lr_model)
            adam_step(model.params, gw, opt_model, config.lr_model)
            seg_losses.append(float(loss_h))
            dom_losses.append(float(loss_c))

        rewards = np.asarray(ell_div, dtype=np.float64)
        if method == "aadg" and forced is None:
            if config.algorithm == "ppo":
                normalized = controller.ppo_update(traces, rewards, clip=config.ppo_clip)
            else:
                normalized = controller.reinforce_update(traces, rewards)
        else:
            normalized = normalize_rewards(rewards) if B >= 2 else np.zeros(B)
        epoch_records.append(
            EpochRecord(
                epoch=epoch,
                policies=[policy_to_dict(p) for p in policies],
                rewards_raw=[float(r) for r in rewards],
                rewards_normalized=[float(r) for r in normalized],
                diversity_steps=[list(map(float, s)) for s in div_steps],
                mean_seg_loss=float(np.mean(seg_losses)),
                mean_domain_loss=float(np.mean(dom_losses)),
            )
        )

    last = epoch_records[-1]
    best_idx = int(np.argmax(last.rewards_raw))
    held_out = None
    if eval_datasets:
        held_out = {
            str(d): evaluate_model(model, samples) for d, samples in sorted(eval_datasets.items())
        }
    report = RunReport(
        method=method,
        config=config.to_dict(),
        domain_ids=domain_ids,
        epochs=epoch_records,
        best_policy=last.policies[best_idx],
        best_reward=float(last.rewards_raw[best_idx]),
        held_out=held_out,
        wall_clock_seconds=time.perf_counter() - t0,
    )
    return SearchResult(model, classifier, controller, report)


def run_with_forced_policies(
    config: SearchConfig,
    datasets: dict[int, list[LabeledSample]],
    policies: list[Policy],
) -> SearchResult:
    """Run the loop with a fixed policy list (no controller updates); used for
    controlled reward comparisons."""
    cfg = replace(config, B=len(policies)).validate()
    return _run(cfg, datasets, None, method="forced", forced_policies=policies)


def _embedding_batch(emb: np.ndarray, ids: np.ndarray, code: int):
    from .ot import EmbeddingBatch

    rows = emb[ids == code].astype(np.float64)
    if rows.shape[0] == 0:
        raise ValueError(f"balanced batch has no samples for domain code {code}")
    # float32 models normalize at reduced precision; tighten in float64
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return EmbeddingBatch(rows, code)


def seed_streams(seed: int) -> dict[str, np.random.SeedSequence]:
    """Named child seeds for every randomness consumer in the loop.

    All run randomness descends from the single config seed through this
    table, which is what makes seeded runs byte-reproducible.
    """
    names = ("model", "classifier", "controller", "batch", "augment",
             "sample", "uniform", "policy")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return dict(zip(names, children))


def _seed_int(seed_seq: np.random.SeedSequence) -> int:
    return int(seed_seq.generate_state(1, np.uint64)[0])
