"""Autoregressive recurrent controller over augmentation policies.

A single-layer LSTM emits alternating operation/magnitude tokens; policies
are scored by a diversity reward and the controller is trained with
normalized-reward policy gradients (plain REINFORCE by default, a one-epoch
clipped-surrogate variant behind a switch).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import AdamState, adam_step
from .transforms import OP_ORDER, OpKind, Operation, Policy, SubPolicy

TANH_CONSTANT = 2.5
TEMPERATURE = 2.0
ENTROPY_WEIGHT = 1e-5
CONTROLLER_LR = 3.5e-4
PPO_CLIP = 0.2
REWARD_STD_GUARD = 1e-8


@dataclass
class SampleTrace:
    """One rollout: chosen tokens with their log-probabilities and entropies.

    Token order is op, magnitude, op, magnitude, ... for S*L operation slots.
    """

    tokens: np.ndarray  # (2*S*L,) int
    logprobs: np.ndarray  # (2*S*L,) float, <= 0
    entropies: np.ndarray  # (2*S*L,) float

    @property
    def total_logprob(self) -> float:
        return float(self.logprobs.sum())


def normalize_rewards(rewards: np.ndarray) -> np.ndarray:
    """Standardize to mean 0, unit population variance (sigma guarded)."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise ValueError(f"reward normalization needs >= 2 samples, got {r.size}")
    return (r - r.mean()) / (r.std() + REWARD_STD_GUARD)


class Controller:
    """Policy controller: embedding table, LSTM cell, two prediction heads.

    Logits are shaped as tanh_constant * tanh(logits / temperature) before
    the softmax, bounding them to [-tanh_constant, tanh_constant].
    """

    def __init__(
        self,
        R: int = 10,
        S: int = 5,
        L: int = 2,
        ops: tuple[OpKind, ...] = OP_ORDER,
        hidden: int = 100,
        emb_size: int = 32,
        seed: int = 0,
        lr: float = CONTROLLER_LR,
        tanh_constant: float = TANH_CONSTANT,
        temperature: float = TEMPERATURE,
        entropy_weight: float = ENTROPY_WEIGHT,
    ):
        if R < 2 or S < 1 or L < 1:
            raise ValueError(f"invalid grid (R={R}, S={S}, L={L})")
        if len(ops) < 1 or len(set(ops)) != len(ops):
            raise ValueError("ops must be a non-empty set of distinct kinds")
        self.R = R
        self.S = S
        self.L = L
        self.ops = tuple(ops)
        self.n_ops = len(ops)
        self.hidden = hidden
        self.emb_size = emb_size
        self.lr = lr
        self.tanh_constant = tanh_constant
        self.temperature = temperature
        self.entropy_weight = entropy_weight

        rng = np.random.default_rng(seed)

        def init(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        h, e = hidden, emb_size
        self.params: dict[str, np.ndarray] = {
            "emb.table": init((self.n_ops + R, e), e),
            "emb.start": init((e,), e),
            "lstm.wx": init((4 * h, e), e),
            "lstm.wh": init((4 * h, h), h),
            "lstm.b": np.zeros(4 * h),
            "op.w": init((self.n_ops, h), h),
            "op.b": np.zeros(self.n_ops),
            "mag.w": init((R, h), h),
            "mag.b": np.zeros(R),
        }
        self.opt = AdamState(self.params)

    # ------------------------------------------------------------------
    # forward
    # ------------------------------------------------------------------

    @property
    def num_tokens(self) -> int:
        return 2 * self.S * self.L

    def _head(self, step: int):
        return ("op.w", "op.b") if step % 2 == 0 else ("mag.w", "mag.b")

    def _rollout(
        self,
        B: int,
        tokens: np.ndarray | None,
        rng: np.random.Generator | None,
        keep_cache: bool = True,
    ):
        """Shared sampler / teacher-forced scorer, batched over B rollouts.

        With tokens=None, samples new ones from rng; otherwise replays the
        given (B, T) token matrix.  keep_cache retains per-step state for
        BPTT; samplers can skip it.
        """
        p = self.params
        hdim, e = self.hidden, self.emb_size
        T = self.num_tokens
        sampling = tokens is None
        if sampling:
            tokens = np.zeros((B, T), dtype=np.int64)
        else:
            tokens = np.asarray(tokens)
            if tokens.shape != (B, T):
                raise ValueError(f"tokens must be ({B}, {T}), got {tokens.shape}")
        h = np.zeros((B, hdim))
        c = np.zeros((B, hdim))
        x = np.broadcast_to(p["emb.start"], (B, e)).copy()
        steps = []
        logprobs = np.zeros((B, T))
        entropies = np.zeros((B, T))
        for t in range(T):
            gates = x @ p["lstm.wx"].T + h @ p["lstm.wh"].T + p["lstm.b"]
            gi, gf, gg, go = np.split(gates, 4, axis=1)
            i = _sigmoid(gi)
            f = _sigmoid(gf)
            g = np.tanh(gg)
            o = _sigmoid(go)
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            wname, bname = self._head(t)
            raw = h_new @ p[wname].T + p[bname]
            tu = np.tanh(raw / self.temperature)
            z = self.tanh_constant * tu
            zs = z - z.max(axis=1, keepdims=True)
            ez = np.exp(zs)
            probs = ez / ez.sum(axis=1, keepdims=True)
            logp = zs - np.log(ez.sum(axis=1, keepdims=True))
            if sampling:
                u = rng.random(B)
                chosen = (np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1)
                chosen = np.minimum(chosen, probs.shape[1] - 1)
                tokens[:, t] = chosen
            else:
                chosen = tokens[:, t]
            rows = np.arange(B)
            logprobs[:, t] = logp[rows, chosen]
            entropies[:, t] = -(probs * logp).sum(axis=1)
            emb_rows = self._token_rows(t, chosen)
            if keep_cache:
                steps.append(
                    dict(x=x, h=h, c=c, i=i, f=f, g=g, o=o, c_new=c_new, tc=tc,
                         h_new=h_new, tu=tu, probs=probs, logp=logp, chosen=chosen,
                         emb_rows=emb_rows)
                )
            h, c = h_new, c_new
            # chosen token becomes the next input embedding
            x = p["emb.table"][emb_rows]
        return tokens, logprobs, entropies, steps

    def _token_rows(self, step: int, chosen: np.ndarray) -> np.ndarray:
        return chosen if step % 2 == 0 else self.n_ops + chosen

    def sample_policies(self, B: int, rng: np.random.Generator):
        """B independent rollouts -> (policies, traces)."""
        if B < 1:
            raise ValueError(f"need B >= 1, got {B}")
        tokens, logprobs, entropies, _ = self._rollout(B, None, rng, keep_cache=False)
        policies = [self.tokens_to_policy(tokens[b]) for b in range(B)]
        traces = [
            SampleTrace(tokens[b].copy(), logprobs[b].copy(), entropies[b].copy())
            for b in range(B)
        ]
        return policies, traces

    def tokens_to_policy(self, tokens: np.ndarray) -> Policy:
        if len(tokens) != self.num_tokens:
            raise ValueError(f"expected {self.num_tokens} tokens, got {len(tokens)}")
        subpolicies = []
        for s in range(self.S):
            ops = []
            for l in range(self.L):
                k = 2 * (s * self.L + l)
                kind = self.ops[int(tokens[k])]
                level = int(tokens[k + 1])
                ops.append(Operation(kind, level, self.R))
            subpolicies.append(SubPolicy(tuple(ops)))
        return Policy(tuple(subpolicies), self.R)

    def log_probs(self, tokens: np.ndarray) -> np.ndarray:
        """Teacher-forced per-token log-probabilities, shape (B, T)."""
        tokens = np.atleast_2d(tokens)
        _, logprobs, _, _ = self._rollout(tokens.shape[0], tokens, None, keep_cache=False)
        return logprobs

    # ------------------------------------------------------------------
    # backward / updates
    # ------------------------------------------------------------------

    def _grads_for_objective(self, steps, tokens, coeffs, entropy_coeff):
        """Gradient of J = sum_{b,t} coeffs[b,t] * logp[b,t]
        + entropy_coeff * sum_{b,t} H[b,t] with respect to all parameters."""
        p = self.params
        B, T = tokens.shape
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dh_next = np.zeros((B, self.hidden))
        dc_next = np.zeros((B, self.hidden))
        rows = np.arange(B)
        for t in reversed(range(T)):
            st = steps[t]
            probs, chosen = st["probs"], st["chosen"]
            onehot = np.zeros_like(probs)
            onehot[rows, chosen] = 1.0
            dz = coeffs[:, t : t + 1] * (onehot - probs)
            if entropy_coeff:
                H = -(probs * st["logp"]).sum(axis=1, keepdims=True)
                dz = dz + entropy_coeff * (-probs * (st["logp"] + H))
            draw = dz * (self.tanh_constant / self.temperature) * (1.0 - st["tu"] ** 2)
            wname, bname = self._head(t)
            grads[wname] += draw.T @ st["h_new"]
            grads[bname] += draw.sum(axis=0)
            dh = draw @ p[wname] + dh_next
            do = dh * st["tc"]
            dc = dh * st["o"] * (1.0 - st["tc"] ** 2) + dc_next
            di = dc * st["g"]
            dg = dc * st["i"]
            df = dc * st["c"]
            dc_next = dc * st["f"]
            dgates = np.concatenate(
                [
                    di * st["i"] * (1 - st["i"]),
                    df * st["f"] * (1 - st["f"]),
                    dg * (1 - st["g"] ** 2),
                    do * st["o"] * (1 - st["o"]),
                ],
                axis=1,
            )
            grads["lstm.wx"] += dgates.T @ st["x"]
            grads["lstm.wh"] += dgates.T @ st["h"]
            grads["lstm.b"] += dgates.sum(axis=0)
            dx = dgates @ p["lstm.wx"]
            if t == 0:
                grads["emb.start"] += dx.sum(axis=0)
            else:
                np.add.at(grads["emb.table"], steps[t - 1]["emb_rows"], dx)
            dh_next = dgates @ p["lstm.wh"]
        return grads

    def _check_update_args(self, traces, rewards):
        B = len(traces)
        rewards = np.asarray(rewards, dtype=np.float64)
        if rewards.shape != (B,):
            raise ValueError(f"need one reward per trace, got {rewards.shape} for B={B}")
        if B < 2:
            raise ValueError("updates need B >= 2 (reward normalization is undefined)")
        tokens = np.stack([tr.tokens for tr in traces])
        return tokens, rewards

    def reinforce_update(self, traces: list[SampleTrace], rewards) -> np.ndarray:
        """Normalized-reward policy gradient; one Adam step.

        Returns the normalized rewards actually used.
        """
        tokens, rewards = self._check_update_args(traces, rewards)
        advantages = normalize_rewards(rewards)
        _, _, _, steps = self._rollout(tokens.shape[0], tokens, None)
        coeffs = np.repeat(advantages[:, None], self.num_tokens, axis=1)
        self._apply(steps, tokens, coeffs)
        return advantages

    def ppo_update(self, traces: list[SampleTrace], rewards, clip: float = PPO_CLIP) -> np.ndarray:
        """Single-epoch clipped-surrogate update with the same normalized
        rewards as advantages."""
        if clip <= 0:
            raise ValueError(f"clip must be positive, got {clip}")
        tokens, rewards = self._check_update_args(traces, rewards)
        advantages = normalize_rewards(rewards)
        old_logp = np.stack([tr.logprobs for tr in traces])
        _, new_logp, _, steps = self._rollout(tokens.shape[0], tokens, None)
        ratio = np.exp(new_logp - old_logp)
        adv = advantages[:, None]
        surr_r = ratio * adv
        surr_clip = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
        # gradient flows only where the unclipped branch attains the min
        coeffs = np.where(surr_r <= surr_clip, ratio * adv, 0.0)
        self._apply(steps, tokens, coeffs)
        return advantages

    def _apply(self, steps, tokens, coeffs):
        B, T = tokens.shape
        entropy_coeff = self.entropy_weight / (B * T)
        grads_ascent = self._grads_for_objective(steps, tokens, coeffs, entropy_coeff)
        grads = {k: -v for k, v in grads_ascent.items()}
        adam_step(self.params, grads, self.opt, self.lr)

    def logprob_and_grads(self, tokens: np.ndarray):
        """Total log-probability of one token sequence and its gradient.

        Used by the finite-difference gradient gate.
        """
        tokens = np.atleast_2d(tokens)
        B, T = tokens.shape
        _, logprobs, _, steps = self._rollout(B, tokens, None)
        grads = self._grads_for_objective(steps, tokens, np.ones((B, T)), 0.0)
        return float(logprobs.sum()), grads

    def save(self, path) -> None:
        from .checkpoint import save_checkpoint

        meta = {
            "R": self.R, "S": self.S, "L": self.L,
            "ops": [k.value for k in self.ops],
            "hidden": self.hidden, "emb_size": self.emb_size,
            "lr": self.lr, "tanh_constant": self.tanh_constant,
            "temperature": self.temperature, "entropy_weight": self.entropy_weight,
        }
        save_checkpoint(path, self.params, "controller", meta)

    @classmethod
    def load(cls, path) -> "Controller":
        from .checkpoint import CheckpointError, load_checkpoint

        arrays, kind, meta = load_checkpoint(path)
        if kind != "controller":
            raise CheckpointError(f"{path}: expected a controller checkpoint, got {kind!r}")
        by_name = {k.value: k for k in OpKind}
        ctrl = cls(
            R=meta["R"], S=meta["S"], L=meta["L"],
            ops=tuple(by_name[n] for n in meta["ops"]),
            hidden=meta["hidden"], emb_size=meta["emb_size"], lr=meta["lr"],
            tanh_constant=meta["tanh_constant"], temperature=meta["temperature"],
            entropy_weight=meta["entropy_weight"],
        )
        ctrl.params = arrays
        ctrl.opt = AdamState(arrays)
        return ctrl

    def most_likely_pair(self) -> tuple[int, int]:
        """Exact modal (op, level) pair of the sampling distribution.

        Defined for the single-operation layout (S = L = 1).
        """
        if self.S != 1 or self.L != 1:
            raise ValueError("modal pair is defined for S = L = 1 controllers")
        best = None
        for op_tok in range(self.n_ops):
            toks = np.zeros((1, 2), dtype=np.int64)
            toks[0, 0] = op_tok
            logp = self.log_probs(toks)[0]
            p_op = np.exp(logp[0])
            # conditional magnitude distribution given this op token
            _, _, _, steps = self._rollout(1, toks, None)
            p_mag = steps[1]["probs"][0]
            j = int(np.argmax(p_mag))
            score = p_op * p_mag[j]
            if best is None or score > best[0]:
                best = (score, op_tok, j)
        return best[1], best[2]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
