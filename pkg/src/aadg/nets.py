"""Small segmentation and domain-classification networks with hand-rolled
reverse-mode gradients.

The layer set is exactly what the two models need: 3x3/1x1 convolution,
rectifier, 2x average pool, nearest-neighbor upsampling, channel concat,
dense, global average pool, row normalization, and the two cross-entropy
losses.  Gradient correctness is gated by `grad_check` (central finite
differences), not by a framework.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ot import EmbeddingBatch

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
NORM_GUARD = 1e-12


# ---------------------------------------------------------------------------
# layer primitives: forward returns (out, cache), backward consumes cache
# ---------------------------------------------------------------------------


def _im2col(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    """(N, C, H, W) -> (N*H_out*W_out, C*k*k) patch matrix, stride 1."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    n, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    return np.ascontiguousarray(cols)


def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Stride-1 convolution; 3x3 kernels use same padding, 1x1 none."""
    n, c, h, wd = x.shape
    o, ci, k, _ = w.shape
    assert ci == c, f"channel mismatch {ci} vs {c}"
    pad = (k - 1) // 2
    cols = _im2col(x, k, pad)
    out = cols @ w.reshape(o, -1).T + b
    out = out.reshape(n, h, wd, o).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (cols, x.shape, w)


def conv_backward(dout: np.ndarray, cache):
    cols, x_shape, w = cache
    n, c, h, wd = x_shape
    o, _, k, _ = w.shape
    dmat = dout.transpose(0, 2, 3, 1).reshape(-1, o)
    dw = (dmat.T @ cols).reshape(w.shape)
    db = dmat.sum(axis=0)
    # dx is a same-geometry convolution of dout with the flipped, transposed kernel
    w_flip = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    pad = (k - 1) // 2
    cols_d = _im2col(dout, k, pad)
    dx = cols_d @ w_flip.reshape(c, -1).T
    dx = dx.reshape(n, h, wd, c).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(dx), dw, db


def relu_forward(x: np.ndarray):
    out = np.maximum(x, 0.0)
    return out, (x > 0)


def relu_backward(dout: np.ndarray, cache):
    return dout * cache


def avgpool2_forward(x: np.ndarray):
    n, c, h, w = x.shape
    assert h % 2 == 0 and w % 2 == 0, f"pooling needs even dims, got {h}x{w}"
    out = x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    return out, x.shape


def avgpool2_backward(dout: np.ndarray, x_shape):
    d = np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3)
    return d * 0.25


def upsample2_forward(x: np.ndarray):
    out = np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)
    return out, x.shape


def upsample2_backward(dout: np.ndarray, x_shape):
    n, c, h, w = x_shape
    return dout.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    return x @ w.T + b, x


def dense_backward(dout: np.ndarray, cache, w: np.ndarray):
    x = cache
    dw = dout.T @ x
    db = dout.sum(axis=0)
    dx = dout @ w
    return dx, dw, db


def gap_forward(x: np.ndarray):
    n, c, h, w = x.shape
    return x.mean(axis=(2, 3)), x.shape


def gap_backward(dout: np.ndarray, x_shape):
    n, c, h, w = x_shape
    return np.broadcast_to(dout[:, :, None, None], x_shape) / (h * w)


def l2norm_forward(x: np.ndarray):
    nrm = np.maximum(np.linalg.norm(x, axis=1, keepdims=True), NORM_GUARD)
    y = x / nrm
    return y, (y, nrm)


def l2norm_backward(dout: np.ndarray, cache):
    y, nrm = cache
    return (dout - y * (dout * y).sum(axis=1, keepdims=True)) / nrm


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def bce_with_logits(logits: np.ndarray, targets: np.ndarray):
    """Mean binary cross-entropy over every pixel, from sigmoid logits.

    Returns (loss, dlogits); uses the overflow-safe max(z,0) form.
    """
    z = logits
    y = targets
    loss = float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))
    sig = 1.0 / (1.0 + np.exp(-z))
    dz = (sig - y) / z.size
    return loss, dz


def softmax_xent(logits: np.ndarray, onehot: np.ndarray):
    """Mean K-way cross-entropy; returns (loss, dlogits, probs)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    logp = shifted - np.log(expz.sum(axis=1, keepdims=True))
    loss = float(-(onehot * logp).sum() / n)
    dlogits = (probs - onehot) / n
    return loss, dlogits, probs


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------


@dataclass
class TrainBatch:
    """Preprocessed training mini-batch: [0,1] floats, binary masks, one-hot
    domain codes, and the raw domain ids."""

    images: np.ndarray  # (N, 3, H, W) float
    masks: np.ndarray  # (N, H, W) float 0/1
    domain_onehot: np.ndarray  # (N, K)
    domain_ids: np.ndarray  # (N,) int

    def __post_init__(self):
        n = self.images.shape[0]
        if not (self.masks.shape[0] == self.domain_onehot.shape[0] == len(self.domain_ids) == n):
            raise ValueError("batch fields disagree on sample count")
        rows = self.domain_onehot.sum(axis=1)
        if not np.allclose(rows, 1.0):
            raise ValueError("domain codes must be one-hot")


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


ENCODER_WIDTHS = (8, 16, 32)


def _uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class SegModel:
    """Shared encoder plus mirrored segmentation decoder.

    Encoder: 3 blocks of [3x3 conv, relu, 2x avg pool] at widths 8/16/32.
    Decoder: 3 blocks of [2x nearest upsample, skip concat, 3x3 conv, relu]
    and a final 1x1 conv producing one logit plane at input resolution.
    """

    def __init__(self, seed: int = 0, in_channels: int = 3, dtype=np.float64):
        rng = np.random.default_rng(seed)
        w1, w2, w3 = ENCODER_WIDTHS
        self.dtype = np.dtype(dtype)
        self.widths = ENCODER_WIDTHS
        self.in_channels = in_channels
        p: dict[str, np.ndarray] = {}

        def conv(name, cout, cin, k):
            p[f"{name}.w"] = _uniform_init(rng, (cout, cin, k, k), cin * k * k, self.dtype)
            p[f"{name}.b"] = _uniform_init(rng, (cout,), cin * k * k, self.dtype)

        conv("enc1", w1, in_channels, 3)
        conv("enc2", w2, w1, 3)
        conv("enc3", w3, w2, 3)
        conv("dec3", w2, w3 + w3, 3)
        conv("dec2", w1, w2 + w2, 3)
        conv("dec1", w1, w1 + w1, 3)
        conv("head", 1, w1, 1)
        self.params = p

    def encode(self, x: np.ndarray):
        """Images (N, 3, H, W) in [0,1] -> features (N, 32, H/8, W/8) + cache."""
        x = np.ascontiguousarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"expected (N, {self.in_channels}, H, W), got {x.shape}")
        if x.shape[2] % 8 or x.shape[3] % 8:
            raise ValueError(f"spatial dims must be multiples of 8, got {x.shape[2:]}")
        p = self.params
        cache = {}
        h = x
        for i in (1, 2, 3):
            h, cache[f"enc{i}.conv"] = conv_forward(h, p[f"enc{i}.w"], p[f"enc{i}.b"])
            h, cache[f"enc{i}.relu"] = relu_forward(h)
            cache[f"enc{i}.act"] = h  # pre-pool activation, reused as skip
            h, cache[f"enc{i}.pool"] = avgpool2_forward(h)
        return h, cache

    def decode(self, features: np.ndarray, cache):
        p = self.params
        h = features
        for i in (3, 2, 1):
            h, cache[f"dec{i}.up"] = upsample2_forward(h)
            skip = cache[f"enc{i}.act"]
            h = np.concatenate([h, skip], axis=1)
            cache[f"dec{i}.split"] = h.shape[1] - skip.shape[1]
            h, cache[f"dec{i}.conv"] = conv_forward(h, p[f"dec{i}.w"], p[f"dec{i}.b"])
            h, cache[f"dec{i}.relu"] = relu_forward(h)
        logits, cache["head.conv"] = conv_forward(h, p["head.w"], p["head.b"])
        return logits, cache

    def forward(self, x: np.ndarray):
        features, cache = self.encode(x)
        cache["features"] = features
        return self.decode(features, cache)

    def backward(self, dlogits: np.ndarray, cache, d_features: np.ndarray | None = None):
        """Grads for all parameters from d(loss)/d(logits); optionally add an
        extra gradient flowing into the encoder features."""
        grads: dict[str, np.ndarray] = {}
        d, grads["head.w"], grads["head.b"] = conv_backward(dlogits, cache["head.conv"])
        dskips = {}
        for i in (1, 2, 3):
            d = relu_backward(d, cache[f"dec{i}.relu"])
            d, grads[f"dec{i}.w"], grads[f"dec{i}.b"] = conv_backward(d, cache[f"dec{i}.conv"])
            split = cache[f"dec{i}.split"]
            dskips[i] = d[:, split:]
            d = upsample2_backward(np.ascontiguousarray(d[:, :split]), cache[f"dec{i}.up"])
        if d_features is not None:
            d = d + d_features
        for i in (3, 2, 1):
            d = avgpool2_backward(d, cache[f"enc{i}.pool"])
            d = d + dskips[i]
            d = relu_backward(d, cache[f"enc{i}.relu"])
            d, grads[f"enc{i}.w"], grads[f"enc{i}.b"] = conv_backward(d, cache[f"enc{i}.conv"])
        return grads

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Sigmoid scores (N, H, W) for evaluation."""
        logits, _ = self.forward(x)
        return 1.0 / (1.0 + np.exp(-logits[:, 0]))

    def save(self, path) -> None:
        from .checkpoint import save_checkpoint

        meta = {"widths": list(self.widths), "in_channels": self.in_channels,
                "dtype": self.dtype.str}
        save_checkpoint(path, self.params, "seg_model", meta)

    @classmethod
    def load(cls, path) -> "SegModel":
        from .checkpoint import CheckpointError, load_checkpoint

        arrays, kind, meta = load_checkpoint(path)
        if kind != "seg_model":
            raise CheckpointError(f"{path}: expected a seg_model checkpoint, got {kind!r}")
        model = cls(seed=0, in_channels=meta["in_channels"], dtype=np.dtype(meta["dtype"]))
        model.params = arrays
        return model


class DomainClassifier:
    """Domain decoder: global average pool -> dense to n -> unit-normalize ->
    dense to K logits.  The normalized n-vector is the domain embedding."""

    def __init__(self, num_domains: int, embedding_dim: int = 32, seed: int = 0, dtype=np.float64):
        if num_domains < 2:
            raise ValueError(f"need K >= 2 domains, got {num_domains}")
        rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)
        self.num_domains = num_domains
        self.embedding_dim = embedding_dim
        c = ENCODER_WIDTHS[-1]
        self.params = {
            "fc1.w": _uniform_init(rng, (embedding_dim, c), c, self.dtype),
            "fc1.b": _uniform_init(rng, (embedding_dim,), c, self.dtype),
            "fc2.w": _uniform_init(rng, (num_domains, embedding_dim), embedding_dim, self.dtype),
            "fc2.b": _uniform_init(rng, (num_domains,), embedding_dim, self.dtype),
        }

    def forward(self, features: np.ndarray):
        p = self.params
        cache = {}
        pooled, cache["gap"] = gap_forward(features)
        pre, cache["fc1"] = dense_forward(pooled, p["fc1.w"], p["fc1.b"])
        emb, cache["norm"] = l2norm_forward(pre)
        logits, cache["fc2"] = dense_forward(emb, p["fc2.w"], p["fc2.b"])
        cache["embeddings"] = emb
        return emb, logits, cache

    def backward(self, dlogits: np.ndarray, cache):
        """Grads for the classifier's own parameters (the encoder features
        are treated as fixed input here)."""
        p = self.params
        grads: dict[str, np.ndarray] = {}
        d, grads["fc2.w"], grads["fc2.b"] = dense_backward(dlogits, cache["fc2"], p["fc2.w"])
        d = l2norm_backward(d, cache["norm"])
        d, grads["fc1.w"], grads["fc1.b"] = dense_backward(d, cache["fc1"], p["fc1.w"])
        return grads

    def save(self, path) -> None:
        from .checkpoint import save_checkpoint

        meta = {"num_domains": self.num_domains, "embedding_dim": self.embedding_dim,
                "dtype": self.dtype.str}
        save_checkpoint(path, self.params, "domain_classifier", meta)

    @classmethod
    def load(cls, path) -> "DomainClassifier":
        from .checkpoint import CheckpointError, load_checkpoint

        arrays, kind, meta = load_checkpoint(path)
        if kind != "domain_classifier":
            raise CheckpointError(f"{path}: expected a domain_classifier checkpoint, got {kind!r}")
        clf = cls(meta["num_domains"], meta["embedding_dim"], seed=0,
                  dtype=np.dtype(meta["dtype"]))
        clf.params = arrays
        return clf


# ---------------------------------------------------------------------------
# spec surface: losses over batches, embeddings, optimizer, gradient check
# ---------------------------------------------------------------------------


def encode(model: SegModel, images: np.ndarray) -> np.ndarray:
    features, _ = model.encode(images)
    return features


def seg_loss(model: SegModel, batch: TrainBatch) -> float:
    logits, _ = model.forward(batch.images)
    loss, _ = bce_with_logits(logits[:, 0], batch.masks)
    return loss


def seg_loss_and_grads(model: SegModel, images: np.ndarray, masks: np.ndarray):
    logits, cache = model.forward(images)
    loss, dpix = bce_with_logits(logits[:, 0], masks)
    grads = model.backward(dpix[:, None], cache)
    return loss, grads


def domain_embed_and_loss(classifier: DomainClassifier, features: np.ndarray, z: np.ndarray):
    """Embeddings grouped per domain plus the K-way cross-entropy loss."""
    emb, logits, _ = classifier.forward(features)
    loss, _, _ = softmax_xent(logits, z)
    ids = np.argmax(z, axis=1)
    batches = [
        EmbeddingBatch(emb[ids == d], int(d)) for d in np.unique(ids)
    ]
    return batches, loss


def domain_loss_and_grads(classifier: DomainClassifier, features: np.ndarray, z: np.ndarray):
    emb, logits, cache = classifier.forward(features)
    loss, dlogits, _ = softmax_xent(logits, z)
    grads = classifier.backward(dlogits, cache)
    return loss, grads, emb


class AdamState:
    """Per-parameter first/second moment accumulators."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> bool:
    """One adaptive-moment update in place.

    Returns False (and leaves parameters and state untouched) if any gradient
    is non-finite.
    """
    for k in params:
        if not np.isfinite(grads[k]).all():
            return False
    state.t += 1
    t = state.t
    for k, p in params.items():
        g = grads[k]
        state.m[k] = beta1 * state.m[k] + (1 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1 - beta2) * g * g
        mhat = state.m[k] / (1 - beta1**t)
        vhat = state.v[k] / (1 - beta2**t)
        p -= lr * mhat / (np.sqrt(vhat) + eps)
    return True


def grad_check(
    loss_and_grad_fn,
    params: dict[str, np.ndarray],
    eps: float = 1e-5,
    num_coords: int = 50,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between analytic gradients and central finite
    differences over `num_coords` randomly chosen parameter coordinates."""
    rng = rng or np.random.default_rng(0)
    _, grads = loss_and_grad_fn(params)
    keys = sorted(params.keys())
    sizes = np.array([params[k].size for k in keys])
    probs = sizes / sizes.sum()
    worst = 0.0
    for _ in range(num_coords):
        key = keys[rng.choice(len(keys), p=probs)]
        flat_idx = int(rng.integers(params[key].size))
        flat = params[key].reshape(-1)
        orig = flat[flat_idx]
        flat[flat_idx] = orig + eps
        lp, _ = loss_and_grad_fn(params)
        flat[flat_idx] = orig - eps
        lm, _ = loss_and_grad_fn(params)
        flat[flat_idx] = orig
        fd = (lp - lm) / (2 * eps)
        an = grads[key].reshape(-1)[flat_idx]
        err = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
        worst = max(worst, err)
    return worst
