"""Color-space transform kernels, magnitude grids, and policy application.

Ten pixel operations over 8-bit RGB images, a uniform R-point magnitude
discretization per operation, and the sub-policy / policy composition
machinery.  All arithmetic is pinned so that independent implementations
can reproduce outputs bit-exactly; see docs/policy_schema.md for the
normative description of every formula, rounding rule, and random draw.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import SplitMix64


class OpKind(enum.Enum):
    AUTO_CONTRAST = "AutoContrast"
    BRIGHTNESS = "Brightness"
    COLOR = "Color"
    CONTRAST = "Contrast"
    CUTOUT = "Cutout"
    EQUALIZE = "Equalize"
    INVERT = "Invert"
    POSTERIZE = "Posterize"
    SHARPNESS = "Sharpness"
    SOLARIZE = "Solarize"


#: Canonical operation order; token index i in the controller's action space
#: and in serialized policies refers to OP_ORDER[i].
OP_ORDER: tuple[OpKind, ...] = tuple(OpKind)

#: Operations whose magnitude token is carried but ignored.
PARAMETERLESS: frozenset[OpKind] = frozenset(
    {OpKind.AUTO_CONTRAST, OpKind.EQUALIZE, OpKind.INVERT}
)

#: Magnitude ranges [lo, hi]; None for parameterless kinds.
MAGNITUDE_RANGES: dict[OpKind, tuple[float, float] | None] = {
    OpKind.AUTO_CONTRAST: None,
    OpKind.BRIGHTNESS: (0.1, 1.9),
    OpKind.COLOR: (0.1, 1.9),
    OpKind.CONTRAST: (0.1, 1.9),
    OpKind.CUTOUT: (0.0, 0.2),
    OpKind.EQUALIZE: None,
    OpKind.INVERT: None,
    OpKind.POSTERIZE: (4.0, 8.0),
    OpKind.SHARPNESS: (0.1, 1.9),
    OpKind.SOLARIZE: (0.0, 256.0),
}

POLICY_SCHEMA_VERSION = 1


@dataclass
class Image:
    """8-bit RGB raster with an optional binary segmentation mask.

    Transforms never change width, height, or mask content.
    """

    pixels: np.ndarray  # (H, W, 3) uint8
    mask: np.ndarray | None = None  # (H, W) bool

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be (H, W, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"image dimensions must be positive, got {px.shape[:2]}")
        if px.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {px.dtype}")
        self.pixels = px
        if self.mask is not None:
            m = np.asarray(self.mask)
            if m.shape != px.shape[:2]:
                raise ValueError(
                    f"mask shape {m.shape} does not match image {px.shape[:2]}"
                )
            if m.dtype != np.bool_:
                raise ValueError(f"mask must be boolean, got {m.dtype}")
            self.mask = m

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def with_pixels(self, pixels: np.ndarray) -> "Image":
        """Same mask, new pixel planes."""
        return Image(pixels, self.mask)


@dataclass(frozen=True)
class Operation:
    """One transform choice: a kind plus a magnitude index on an R-point grid."""

    kind: OpKind
    level: int
    R: int

    def __post_init__(self):
        if self.R < 2:
            raise ValueError(f"grid resolution R must be >= 2, got {self.R}")
        if not 0 <= self.level < self.R:
            raise ValueError(f"level {self.level} outside [0, {self.R - 1}]")

    @property
    def magnitude(self) -> float:
        return magnitude_value(self.kind, self.level, self.R)


@dataclass(frozen=True)
class SubPolicy:
    """An ordered chain of operations applied as one unit."""

    ops: tuple[Operation, ...]

    def __post_init__(self):
        if len(self.ops) < 1:
            raise ValueError("sub-policy needs at least one operation")


@dataclass(frozen=True)
class Policy:
    """S sub-policies; application samples one uniformly per image."""

    subpolicies: tuple[SubPolicy, ...]
    R: int
    cutout_fill: int = 0

    def __post_init__(self):
        if len(self.subpolicies) < 1:
            raise ValueError("policy needs at least one sub-policy")
        lengths = {len(sp.ops) for sp in self.subpolicies}
        if len(lengths) != 1:
            raise ValueError(f"sub-policies have mixed lengths {sorted(lengths)}")
        for sp in self.subpolicies:
            for op in sp.ops:
                if op.R != self.R:
                    raise ValueError(
                        f"operation grid R={op.R} differs from policy R={self.R}"
                    )
        if self.cutout_fill != 0:
            raise ValueError("only cutout_fill=0 is defined in schema version 1")

    @property
    def S(self) -> int:
        return len(self.subpolicies)

    @property
    def L(self) -> int:
        return len(self.subpolicies[0].ops)


def round_half_away(x: np.ndarray | float) -> np.ndarray | float:
    """Round half away from zero (the rounding rule for all pixel math)."""
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def magnitude_value(kind: OpKind, level: int, R: int) -> float:
    """Magnitude at grid index `level` on the uniform R-point grid.

    Posterize and Solarize magnitudes are integers; parameterless kinds
    return 0.
    """
    if R < 2:
        raise ValueError(f"grid resolution R must be >= 2, got {R}")
    if not 0 <= level < R:
        raise ValueError(f"level {level} outside [0, {R - 1}]")
    rng_lo_hi = MAGNITUDE_RANGES[kind]
    if rng_lo_hi is None:
        return 0.0
    lo, hi = rng_lo_hi
    value = lo + level * (hi - lo) / (R - 1)
    if kind in (OpKind.POSTERIZE, OpKind.SOLARIZE):
        return float(round_half_away(value))
    return value


# ---------------------------------------------------------------------------
# pixel kernels
#
# All blends follow out = clamp(round_half_away(d + alpha * (v - d))) with v
# the original pixel and d the per-kind degenerate image, computed in float64.
# ---------------------------------------------------------------------------


def _clamp_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 255.0).astype(np.uint8)


def _blend(degenerate: np.ndarray, v: np.ndarray, alpha: float) -> np.ndarray:
    d = degenerate.astype(np.float64)
    out = d + alpha * (v.astype(np.float64) - d)
    return _clamp_u8(round_half_away(out))


def _luminance(px: np.ndarray) -> np.ndarray:
    """Integer-valued per-pixel luminance, rounded half away from zero."""
    p = px.astype(np.float64)
    lum = 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]
    return round_half_away(lum)


def invert(px: np.ndarray) -> np.ndarray:
    return (255 - px.astype(np.int16)).astype(np.uint8)


def posterize(px: np.ndarray, bits: int) -> np.ndarray:
    if not 1 <= bits <= 8:
        raise ValueError(f"posterize bits must be in [1, 8], got {bits}")
    keep = np.uint8(256 - (1 << (8 - bits)))
    return px & keep


def solarize(px: np.ndarray, threshold: int) -> np.ndarray:
    inv = invert(px)
    return np.where(px.astype(np.int32) >= threshold, inv, px)


def autocontrast(px: np.ndarray) -> np.ndarray:
    """Per-channel min/max stretch; constant channels are left unchanged."""
    out = px.copy()
    for c in range(3):
        ch = px[..., c]
        lo = int(ch.min())
        hi = int(ch.max())
        if hi <= lo:
            continue
        scale = 255.0 / (hi - lo)
        values = np.arange(256, dtype=np.float64)
        lut = _clamp_u8(round_half_away((values - lo) * scale))
        out[..., c] = lut[ch]
    return out


def equalize(px: np.ndarray) -> np.ndarray:
    """Per-channel cumulative-histogram equalization.

    LUT[i] = clamp((cum_before[i] + step//2) // step) with step = total // 255.
    Making step depend only on the pixel count (not on the last occupied bin)
    is what guarantees exact idempotence of the mapping.
    """
    out = px.copy()
    total = px.shape[0] * px.shape[1]
    step = total // 255
    if step == 0:
        return out
    for c in range(3):
        ch = px[..., c]
        hist = np.bincount(ch.ravel(), minlength=256)
        if np.count_nonzero(hist) <= 1:
            continue
        cum_before = np.concatenate(([0], np.cumsum(hist)[:-1]))
        lut = np.minimum((cum_before + step // 2) // step, 255).astype(np.uint8)
        out[..., c] = lut[ch]
    return out


def brightness(px: np.ndarray, alpha: float) -> np.ndarray:
    return _blend(np.zeros_like(px, dtype=np.float64), px, alpha)


def color(px: np.ndarray, alpha: float) -> np.ndarray:
    lum = _luminance(px)
    return _blend(np.repeat(lum[..., None], 3, axis=2), px, alpha)


def contrast(px: np.ndarray, alpha: float) -> np.ndarray:
    lum = _luminance(px)
    mean = float(round_half_away(lum.sum() / lum.size))
    return _blend(np.full_like(px, mean, dtype=np.float64), px, alpha)


def sharpness(px: np.ndarray, alpha: float) -> np.ndarray:
    """Blend against a 3x3-smoothed degenerate; the one-pixel border is copied
    from the original, so border pixels never change."""
    p = px.astype(np.float64)
    d = p.copy()
    if px.shape[0] >= 3 and px.shape[1] >= 3:
        acc = 5.0 * p[1:-1, 1:-1]
        acc = acc + p[:-2, :-2] + p[:-2, 1:-1] + p[:-2, 2:]
        acc = acc + p[1:-1, :-2] + p[1:-1, 2:]
        acc = acc + p[2:, :-2] + p[2:, 1:-1] + p[2:, 2:]
        d[1:-1, 1:-1] = acc / 13.0
    return _blend(d, px, alpha)


def _cutout_geometry(px: np.ndarray, fraction: float, rng: SplitMix64) -> tuple[int, int, int]:
    """Patch side and center.  Always consumes two draws (center x, then
    center y) so the stream position does not depend on the magnitude."""
    h, w = px.shape[:2]
    side = int(round_half_away(fraction * min(h, w)))
    cx = rng.below(w)
    cy = rng.below(h)
    return side, cx, cy


def _cutout_paint(px: np.ndarray, side: int, cx: int, cy: int) -> np.ndarray:
    h, w = px.shape[:2]
    out = px.copy()
    if side <= 0:
        return out
    half = side // 2
    x0 = max(cx - half, 0)
    y0 = max(cy - half, 0)
    x1 = min(cx - half + side, w)
    y1 = min(cy - half + side, h)
    out[y0:y1, x0:x1, :] = 0
    return out


def cutout(px: np.ndarray, fraction: float, rng: SplitMix64) -> np.ndarray:
    """Zero out one square patch whose side is fraction * min(H, W).

    The patch is clipped at the borders; the segmentation mask is never
    touched.
    """
    side, cx, cy = _cutout_geometry(px, fraction, rng)
    return _cutout_paint(px, side, cx, cy)


def apply_op(img: Image, op: Operation, rng: SplitMix64) -> Image:
    """Apply one operation; dimensions and mask are preserved.

    Only Cutout consumes randomness.
    """
    mag = op.magnitude
    px = img.pixels
    kind = op.kind
    if kind is OpKind.AUTO_CONTRAST:
        out = autocontrast(px)
    elif kind is OpKind.BRIGHTNESS:
        out = brightness(px, mag)
    elif kind is OpKind.COLOR:
        out = color(px, mag)
    elif kind is OpKind.CONTRAST:
        out = contrast(px, mag)
    elif kind is OpKind.CUTOUT:
        out = cutout(px, mag, rng)
    elif kind is OpKind.EQUALIZE:
        out = equalize(px)
    elif kind is OpKind.INVERT:
        out = invert(px)
    elif kind is OpKind.POSTERIZE:
        out = posterize(px, int(mag))
    elif kind is OpKind.SHARPNESS:
        out = sharpness(px, mag)
    elif kind is OpKind.SOLARIZE:
        out = solarize(px, int(mag))
    else:  # pragma: no cover
        raise ValueError(f"unknown operation kind {kind}")
    return img.with_pixels(out)


def apply_subpolicy(img: Image, sp: SubPolicy, rng: SplitMix64) -> Image:
    """Apply the chain in list order."""
    out = img
    for op in sp.ops:
        out = apply_op(out, op, rng)
    return out


def apply_policy(img: Image, policy: Policy, rng: SplitMix64) -> tuple[Image, int]:
    """Draw one sub-policy uniformly, apply it, and report its index.

    Draw order: one index draw, then any Cutout draws in operation order.
    """
    idx = rng.below(policy.S)
    return apply_subpolicy(img, policy.subpolicies[idx], rng), idx


def apply_policy_traced(
    img: Image, policy: Policy, rng: SplitMix64
) -> tuple[Image, int, list[dict]]:
    """apply_policy plus a per-operation event log (Cutout geometry included).

    Consumes the random stream exactly like apply_policy.
    """
    idx = rng.below(policy.S)
    out = img
    events = []
    for op in policy.subpolicies[idx].ops:
        event = {"op": op.kind.value, "level": op.level}
        if op.kind is OpKind.CUTOUT:
            side, cx, cy = _cutout_geometry(out.pixels, op.magnitude, rng)
            out = out.with_pixels(_cutout_paint(out.pixels, side, cx, cy))
            event.update({"side": side, "cx": cx, "cy": cy})
        else:
            out = apply_op(out, op, rng)
        events.append(event)
    return out, idx, events


def search_space_size(R: int, S: int, L: int) -> int:
    """(10 * R) ** (S * L), exactly."""
    if R < 1 or S < 1 or L < 1:
        raise ValueError(f"R, S, L must be positive, got {(R, S, L)}")
    return (10 * R) ** (S * L)


def identity_policy(R: int, S: int, L: int) -> Policy:
    """A policy whose every operation is a pixel-exact identity.

    Solarize at the top grid level has threshold 256, which no 8-bit value
    reaches.
    """
    op = Operation(OpKind.SOLARIZE, R - 1, R)
    sp = SubPolicy(tuple(op for _ in range(L)))
    return Policy(tuple(sp for _ in range(S)), R)


# ---------------------------------------------------------------------------
# policy serialization (schema version 1)
# ---------------------------------------------------------------------------

_OP_BY_NAME = {kind.value: kind for kind in OpKind}


class PolicySchemaError(ValueError):
    """Raised when a serialized policy violates the schema."""


def policy_to_dict(policy: Policy) -> dict:
    return {
        "version": POLICY_SCHEMA_VERSION,
        "R": policy.R,
        "S": policy.S,
        "L": policy.L,
        "cutout_fill": policy.cutout_fill,
        "subpolicies": [
            [{"op": op.kind.value, "level": op.level} for op in sp.ops]
            for sp in policy.subpolicies
        ],
    }


def policy_from_dict(data: dict) -> Policy:
    """Validate and build a policy; unknown fields and wrong names reject."""
    if not isinstance(data, dict):
        raise PolicySchemaError(f"policy document must be an object, got {type(data).__name__}")
    allowed = {"version", "R", "S", "L", "cutout_fill", "subpolicies"}
    unknown = set(data) - allowed
    if unknown:
        raise PolicySchemaError(f"unknown policy field(s): {sorted(unknown)}")
    if data.get("version") != POLICY_SCHEMA_VERSION:
        raise PolicySchemaError(
            f"unsupported schema version {data.get('version')!r}, expected {POLICY_SCHEMA_VERSION}"
        )
    missing = allowed - set(data)
    if missing:
        raise PolicySchemaError(f"missing policy field(s): {sorted(missing)}")
    R, S, L = data["R"], data["S"], data["L"]
    for name, value in (("R", R), ("S", S), ("L", L)):
        if not isinstance(value, int) or value < 1:
            raise PolicySchemaError(f"field {name!r} must be a positive integer, got {value!r}")
    if R < 2:
        raise PolicySchemaError(f"field 'R' must be >= 2, got {R}")
    if data["cutout_fill"] != 0:
        raise PolicySchemaError(f"field 'cutout_fill' must be 0, got {data['cutout_fill']!r}")
    subs = data["subpolicies"]
    if not isinstance(subs, list) or len(subs) != S:
        raise PolicySchemaError(f"'subpolicies' must be a list of length S={S}")
    subpolicies = []
    for si, sp in enumerate(subs):
        if not isinstance(sp, list) or len(sp) != L:
            raise PolicySchemaError(f"subpolicy {si} must be a list of length L={L}")
        ops = []
        for oi, entry in enumerate(sp):
            if not isinstance(entry, dict) or set(entry) != {"op", "level"}:
                raise PolicySchemaError(
                    f"subpolicy {si} op {oi} must be an object with exactly 'op' and 'level'"
                )
            name = entry["op"]
            if name not in _OP_BY_NAME:
                raise PolicySchemaError(f"subpolicy {si} op {oi}: unknown op name {name!r}")
            level = entry["level"]
            if not isinstance(level, int) or not 0 <= level < R:
                raise PolicySchemaError(
                    f"subpolicy {si} op {oi}: level {level!r} outside [0, {R - 1}]"
                )
            ops.append(Operation(_OP_BY_NAME[name], level, R))
        subpolicies.append(SubPolicy(tuple(ops)))
    return Policy(tuple(subpolicies), R)


def save_policy(policy: Policy, path: str | Path) -> None:
    text = json.dumps(policy_to_dict(policy), indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_policy(path: str | Path) -> Policy:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PolicySchemaError(f"policy file is not valid JSON: {exc}") from exc
    return policy_from_dict(data)


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------


def load_png(path: str | Path, mask_path: str | Path | None = None) -> Image:
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        px = np.asarray(im.convert("RGB"), dtype=np.uint8)
    mask = None
    if mask_path is not None:
        with PILImage.open(mask_path) as mm:
            mask = np.asarray(mm.convert("L")) > 127
    return Image(px, mask)


def save_png(img: Image, path: str | Path, mask_path: str | Path | None = None) -> None:
    from PIL import Image as PILImage

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(img.pixels, mode="RGB").save(path, format="PNG")
    if mask_path is not None and img.mask is not None:
        PILImage.fromarray((img.mask.astype(np.uint8)) * 255, mode="L").save(
            mask_path, format="PNG"
        )
