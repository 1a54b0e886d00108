"""A small decoder-only token model in plain numpy.

Float64 throughout, pre-norm residual blocks, rotary position encoding,
and a hand-written backward pass.  The model is deliberately tiny: the
corpora here are a few thousand tokens, and an explicit implementation
keeps every numeric property (causality, gradient exactness, rotary
shift invariance) directly testable without a framework in between.

Training minimizes masked next-token cross entropy: positions whose mask
is 1 are conditioning and contribute nothing to loss or gradients.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, asdict, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "LMError",
    "ModelConfig",
    "TinyLM",
    "rope_rotate",
    "AdamW",
    "train",
    "TrainResult",
    "SampleResult",
    "sample",
    "save_checkpoint",
    "load_checkpoint",
]


class LMError(Exception):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 256
    max_len: int = 8192
    rope_base: float = 10000.0
    dropout: float = 0.0
    harmony_token_id: int = -1   # -1 disables harmony injection

    def __post_init__(self) -> None:
        if self.vocab_size < 1:
            raise LMError("vocab_size must be positive")
        if self.d_model % self.n_heads != 0:
            raise LMError("d_model must be divisible by n_heads")
        if (self.d_model // self.n_heads) % 2 != 0:
            raise LMError("head dimension must be even for rotary pairs")
        if not 0 <= self.dropout < 1:
            raise LMError("dropout must lie in [0, 1)")


_LN_EPS = 1e-5
_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


def rope_rotate(x: np.ndarray, positions: np.ndarray, base: float = 10000.0,
                inverse: bool = False) -> np.ndarray:
    """Rotate query/key vectors by position-dependent angles.

    ``x`` has shape (..., T, hd) with hd even; ``positions`` has shape (T,).
    Adjacent dimension pairs (2j, 2j+1) are rotated by ``pos * base**(-2j/hd)``.
    The map is orthogonal, so ``inverse=True`` (rotation by the negated
    angle) is also the transpose, which the backward pass relies on.
    """
    hd = x.shape[-1]
    if hd % 2 != 0:
        raise LMError("rotary dimension must be even")
    half = hd // 2
    freqs = base ** (-np.arange(half, dtype=np.float64) * 2.0 / hd)
    angles = positions.astype(np.float64)[:, None] * freqs[None, :]   # (T, half)
    cos = np.cos(angles)
    sin = np.sin(angles)
    if inverse:
        sin = -sin
    x_even = x[..., 0::2]
    x_odd = x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = x_even * cos - x_odd * sin
    out[..., 1::2] = x_even * sin + x_odd * cos
    return out


def _layernorm_fwd(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv, g)


def _layernorm_bwd(dy: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv, g = cache
    n = xhat.shape[-1]
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    dx = (inv / n) * (n * dxhat
                      - dxhat.sum(axis=-1, keepdims=True)
                      - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
    return dx, dg, db


def _gelu_fwd(x: np.ndarray):
    u = _GELU_C * (x + _GELU_A * x ** 3)
    t = np.tanh(u)
    return 0.5 * x * (1.0 + t), (x, t)


def _gelu_bwd(dy: np.ndarray, cache) -> np.ndarray:
    x, t = cache
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x ** 2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * du)


def _softmax_last(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class TinyLM:
    """Model parameters plus the forward/backward machinery."""

    config: ModelConfig
    params: dict[str, np.ndarray]

    @classmethod
    def create(cls, config: ModelConfig, seed: int = 42) -> "TinyLM":
        """Gaussian init, scaled down on residual-output projections."""
        rng = np.random.default_rng(seed)
        d, ff, v = config.d_model, config.d_ff, config.vocab_size
        std = 0.02
        res_std = std / np.sqrt(2.0 * config.n_layers)
        p: dict[str, np.ndarray] = {
            "tok_emb": rng.normal(0.0, std, (v, d)),
            "harm_w": rng.normal(0.0, std, (12, d)),
            "harm_b": np.zeros(d),
            "lnf_g": np.ones(d),
            "lnf_b": np.zeros(d),
            "head": rng.normal(0.0, std, (d, v)),
        }
        for i in range(config.n_layers):
            p[f"l{i}.ln1_g"] = np.ones(d)
            p[f"l{i}.ln1_b"] = np.zeros(d)
            p[f"l{i}.wq"] = rng.normal(0.0, std, (d, d))
            p[f"l{i}.wk"] = rng.normal(0.0, std, (d, d))
            p[f"l{i}.wv"] = rng.normal(0.0, std, (d, d))
            p[f"l{i}.wo"] = rng.normal(0.0, res_std, (d, d))
            p[f"l{i}.ln2_g"] = np.ones(d)
            p[f"l{i}.ln2_b"] = np.zeros(d)
            p[f"l{i}.w1"] = rng.normal(0.0, std, (d, ff))
            p[f"l{i}.b1"] = np.zeros(ff)
            p[f"l{i}.w2"] = rng.normal(0.0, res_std, (ff, d))
            p[f"l{i}.b2"] = np.zeros(d)
        return cls(config=config, params=p)

    # -- full forward ------------------------------------------------------

    def logits(self, ids: np.ndarray, harmony: Optional[np.ndarray] = None) -> np.ndarray:
        """All-position logits, shape (B, T, vocab)."""
        out, _ = self._forward(np.atleast_2d(ids), harmony, caches=None)
        return out

    def _embed(self, ids: np.ndarray, harmony: Optional[np.ndarray]) -> np.ndarray:
        p = self.params
        x = p["tok_emb"][ids]
        if harmony is not None and self.config.harmony_token_id >= 0:
            h = np.atleast_2d(np.asarray(harmony, dtype=np.float64))
            if h.shape != (ids.shape[0], 12):
                raise LMError(f"harmony must be ({ids.shape[0]}, 12), got {h.shape}")
            inj = h @ p["harm_w"] + p["harm_b"]
            sel = (ids == self.config.harmony_token_id).astype(np.float64)
            x = x + sel[:, :, None] * inj[:, None, :]
        return x

    def _forward(self, ids: np.ndarray, harmony: Optional[np.ndarray],
                 caches: Optional[list], drop_rng: Optional[np.random.Generator] = None):
        cfg = self.config
        p = self.params
        b, t = ids.shape
        if t > cfg.max_len:
            raise LMError(f"sequence length {t} exceeds max_len {cfg.max_len}")
        if ids.min() < 0 or ids.max() >= cfg.vocab_size:
            raise LMError("token id out of range")
        h = cfg.n_heads
        hd = cfg.d_model // h
        pos = np.arange(t)
        neg = np.triu(np.full((t, t), -np.inf), k=1)   # strictly-future positions
        x = self._embed(ids, harmony)
        if caches is not None:
            caches.append(("embed", ids, harmony))
        for i in range(cfg.n_layers):
            a, ln1c = _layernorm_fwd(x, p[f"l{i}.ln1_g"], p[f"l{i}.ln1_b"])
            q = a @ p[f"l{i}.wq"]
            k = a @ p[f"l{i}.wk"]
            v = a @ p[f"l{i}.wv"]
            qh = q.reshape(b, t, h, hd).transpose(0, 2, 1, 3)
            kh = k.reshape(b, t, h, hd).transpose(0, 2, 1, 3)
            vh = v.reshape(b, t, h, hd).transpose(0, 2, 1, 3)
            qr = rope_rotate(qh, pos, cfg.rope_base)
            kr = rope_rotate(kh, pos, cfg.rope_base)
            scores = qr @ kr.swapaxes(-1, -2) / np.sqrt(hd) + neg
            probs = _softmax_last(scores)
            ctx = probs @ vh
            merged = ctx.transpose(0, 2, 1, 3).reshape(b, t, cfg.d_model)
            proj = merged @ p[f"l{i}.wo"]
            dm1 = self._dropout_mask(proj.shape, drop_rng)
            if dm1 is not None:
                proj = proj * dm1
            x = x + proj
            a2, ln2c = _layernorm_fwd(x, p[f"l{i}.ln2_g"], p[f"l{i}.ln2_b"])
            h1 = a2 @ p[f"l{i}.w1"] + p[f"l{i}.b1"]
            h2, geluc = _gelu_fwd(h1)
            mlp = h2 @ p[f"l{i}.w2"] + p[f"l{i}.b2"]
            dm2 = self._dropout_mask(mlp.shape, drop_rng)
            if dm2 is not None:
                mlp = mlp * dm2
            x = x + mlp
            if caches is not None:
                caches.append(("layer", i, a, ln1c, qr, kr, vh, probs, merged,
                               a2, ln2c, geluc, h2, dm1, dm2))
        xf, lnfc = _layernorm_fwd(x, p["lnf_g"], p["lnf_b"])
        logits = xf @ p["head"]
        if caches is not None:
            caches.append(("final", xf, lnfc))
        return logits, caches

    def _dropout_mask(self, shape, drop_rng) -> Optional[np.ndarray]:
        if self.config.dropout <= 0 or drop_rng is None:
            return None
        keep = 1.0 - self.config.dropout
        return (drop_rng.random(shape) < keep) / keep

    # -- loss and gradients ------------------------------------------------

    def loss(self, ids: np.ndarray, mask: np.ndarray,
             harmony: Optional[np.ndarray] = None) -> float:
        """Masked next-token loss without gradients."""
        value, _ = self._loss_impl(ids, mask, harmony, want_grads=False)
        return value

    def loss_and_grads(self, ids: np.ndarray, mask: np.ndarray,
                       harmony: Optional[np.ndarray] = None,
                       drop_rng: Optional[np.random.Generator] = None,
                       ) -> tuple[float, dict[str, np.ndarray]]:
        return self._loss_impl(ids, mask, harmony, want_grads=True, drop_rng=drop_rng)

    def _loss_impl(self, ids: np.ndarray, mask: np.ndarray,
                   harmony: Optional[np.ndarray], want_grads: bool,
                   drop_rng: Optional[np.random.Generator] = None):
        ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
        mask = np.atleast_2d(np.asarray(mask))
        if mask.shape != ids.shape:
            raise LMError("ids and mask must have the same shape")
        if ids.shape[1] < 2:
            raise LMError("need at least two tokens for next-token training")
        inputs = ids[:, :-1]
        targets = ids[:, 1:]
        tmask = mask[:, 1:]
        scored = np.nonzero(tmask == 0)
        n_scored = scored[0].size
        if n_scored == 0:
            raise LMError("mask leaves nothing to score")

        caches: Optional[list] = [] if want_grads else None
        logits, caches = self._forward(inputs, harmony, caches, drop_rng=drop_rng)

        rows = logits[scored]                       # (n, vocab)
        mx = rows.max(axis=1, keepdims=True)
        shifted = rows - mx
        lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True)) + mx
        picked = rows[np.arange(n_scored), targets[scored]]
        loss = float(np.mean(lse.ravel() - picked))
        if not np.isfinite(loss):
            raise LMError("loss is not finite")
        if not want_grads:
            return loss, None

        dlogits = np.zeros_like(logits)
        soft = np.exp(shifted - (lse - mx))
        soft[np.arange(n_scored), targets[scored]] -= 1.0
        dlogits[scored] = soft / n_scored
        grads = self._backward(dlogits, caches)
        return loss, grads

    def _backward(self, dlogits: np.ndarray, caches: list) -> dict[str, np.ndarray]:
        cfg = self.config
        p = self.params
        grads = {name: np.zeros_like(arr) for name, arr in p.items()}
        b, t, _ = dlogits.shape
        h = cfg.n_heads
        hd = cfg.d_model // h
        pos = np.arange(t)

        tag, xf, lnfc = caches.pop()
        assert tag == "final"
        grads["head"] += xf.reshape(-1, cfg.d_model).T @ dlogits.reshape(-1, cfg.vocab_size)
        dxf = dlogits @ p["head"].T
        dx, dg, db = _layernorm_bwd(dxf, lnfc)
        grads["lnf_g"] += dg
        grads["lnf_b"] += db

        for _ in range(cfg.n_layers):
            (tag, i, a, ln1c, qr, kr, vh, probs, merged,
             a2, ln2c, geluc, h2, dm1, dm2) = caches.pop()
            assert tag == "layer"
            # mlp half
            dmlp = dx if dm2 is None else dx * dm2
            grads[f"l{i}.b2"] += dmlp.sum(axis=(0, 1))
            grads[f"l{i}.w2"] += h2.reshape(-1, cfg.d_ff).T @ dmlp.reshape(-1, cfg.d_model)
            dh2 = dmlp @ p[f"l{i}.w2"].T
            dh1 = _gelu_bwd(dh2, geluc)
            grads[f"l{i}.b1"] += dh1.sum(axis=(0, 1))
            grads[f"l{i}.w1"] += a2.reshape(-1, cfg.d_model).T @ dh1.reshape(-1, cfg.d_ff)
            da2 = dh1 @ p[f"l{i}.w1"].T
            dx2, dg, db = _layernorm_bwd(da2, ln2c)
            grads[f"l{i}.ln2_g"] += dg
            grads[f"l{i}.ln2_b"] += db
            dx = dx + dx2
            # attention half
            dproj = dx if dm1 is None else dx * dm1
            grads[f"l{i}.wo"] += merged.reshape(-1, cfg.d_model).T @ dproj.reshape(-1, cfg.d_model)
            dmerged = dproj @ p[f"l{i}.wo"].T
            dctx = dmerged.reshape(b, t, h, hd).transpose(0, 2, 1, 3)
            dprobs = dctx @ vh.swapaxes(-1, -2)
            dvh = probs.swapaxes(-1, -2) @ dctx
            dscores = (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True)) * probs
            dscores = dscores / np.sqrt(hd)
            dqr = dscores @ kr
            dkr = dscores.swapaxes(-1, -2) @ qr
            dqh = rope_rotate(dqr, pos, cfg.rope_base, inverse=True)
            dkh = rope_rotate(dkr, pos, cfg.rope_base, inverse=True)
            dq = dqh.transpose(0, 2, 1, 3).reshape(b, t, cfg.d_model)
            dk = dkh.transpose(0, 2, 1, 3).reshape(b, t, cfg.d_model)
            dv = dvh.transpose(0, 2, 1, 3).reshape(b, t, cfg.d_model)
            flat_a = a.reshape(-1, cfg.d_model)
            grads[f"l{i}.wq"] += flat_a.T @ dq.reshape(-1, cfg.d_model)
            grads[f"l{i}.wk"] += flat_a.T @ dk.reshape(-1, cfg.d_model)
            grads[f"l{i}.wv"] += flat_a.T @ dv.reshape(-1, cfg.d_model)
            da = dq @ p[f"l{i}.wq"].T + dk @ p[f"l{i}.wk"].T + dv @ p[f"l{i}.wv"].T
            dx1, dg, db = _layernorm_bwd(da, ln1c)
            grads[f"l{i}.ln1_g"] += dg
            grads[f"l{i}.ln1_b"] += db
            dx = dx + dx1

        tag, ids, harmony = caches.pop()
        assert tag == "embed"
        np.add.at(grads["tok_emb"], ids, dx)
        if harmony is not None and cfg.harmony_token_id >= 0:
            hmat = np.atleast_2d(np.asarray(harmony, dtype=np.float64))
            sel = (ids == cfg.harmony_token_id).astype(np.float64)
            dinj = (sel[:, :, None] * dx).sum(axis=1)       # (B, d)
            grads["harm_w"] += hmat.T @ dinj
            grads["harm_b"] += dinj.sum(axis=0)
        return grads

    # -- incremental forward for sampling ----------------------------------

    def start_cache(self, batch: int) -> dict:
        return {"n": 0, "batch": batch,
                "k": [None] * self.config.n_layers,
                "v": [None] * self.config.n_layers}

    def extend(self, cache: dict, ids: np.ndarray,
               harmony: Optional[np.ndarray] = None) -> np.ndarray:
        """Run new tokens through the model, appending to the KV cache.

        ``ids`` has shape (B, S) where S may be 1 for a decode step or the
        whole prefix.  Returns logits for the new positions only.
        """
        cfg = self.config
        p = self.params
        b, s = ids.shape
        if b != cache["batch"]:
            raise LMError("cache batch size mismatch")
        start = cache["n"]
        if start + s > cfg.max_len:
            raise LMError(f"sequence length {start + s} exceeds max_len {cfg.max_len}")
        h = cfg.n_heads
        hd = cfg.d_model // h
        pos = np.arange(start, start + s)
        x = self._embed(ids, harmony)
        for i in range(cfg.n_layers):
            a, _ = _layernorm_fwd(x, p[f"l{i}.ln1_g"], p[f"l{i}.ln1_b"])
            q = (a @ p[f"l{i}.wq"]).reshape(b, s, h, hd).transpose(0, 2, 1, 3)
            k = (a @ p[f"l{i}.wk"]).reshape(b, s, h, hd).transpose(0, 2, 1, 3)
            v = (a @ p[f"l{i}.wv"]).reshape(b, s, h, hd).transpose(0, 2, 1, 3)
            qr = rope_rotate(q, pos, cfg.rope_base)
            kr = rope_rotate(k, pos, cfg.rope_base)
            kfull = kr if cache["k"][i] is None else np.concatenate([cache["k"][i], kr], axis=2)
            vfull = v if cache["v"][i] is None else np.concatenate([cache["v"][i], v], axis=2)
            cache["k"][i] = kfull
            cache["v"][i] = vfull
            scores = qr @ kfull.swapaxes(-1, -2) / np.sqrt(hd)
            if s > 1:
                total = kfull.shape[2]
                neg = np.triu(np.full((s, total), -np.inf), k=1 + start)
                scores = scores + neg
            probs = _softmax_last(scores)
            ctx = (probs @ vfull).transpose(0, 2, 1, 3).reshape(b, s, cfg.d_model)
            x = x + ctx @ p[f"l{i}.wo"]
            a2, _ = _layernorm_fwd(x, p[f"l{i}.ln2_g"], p[f"l{i}.ln2_b"])
            h1 = a2 @ p[f"l{i}.w1"] + p[f"l{i}.b1"]
            h2, _ = _gelu_fwd(h1)
            x = x + h2 @ p[f"l{i}.w2"] + p[f"l{i}.b2"]
        cache["n"] = start + s
        xf, _ = _layernorm_fwd(x, p["lnf_g"], p["lnf_b"])
        return xf @ p["head"]


# ---------------------------------------------------------------------------
# Optimizer

class AdamW:
    """Decoupled weight decay Adam; decay applies to matrix weights only."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 6e-4,
                 betas: tuple[float, float] = (0.9, 0.95), eps: float = 1e-8,
                 weight_decay: float = 0.01) -> None:
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    @staticmethod
    def _decays(name: str, arr: np.ndarray) -> bool:
        return arr.ndim == 2 and name != "tok_emb"

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1 ** self.step_count
        bc2 = 1.0 - b2 ** self.step_count
        for name, g in grads.items():
            m = self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay and self._decays(name, params[name]):
                update = update + self.weight_decay * params[name]
            params[name] -= self.lr * update


# ---------------------------------------------------------------------------
# Training loop

@dataclass
class TrainResult:
    steps: int
    final_loss: float
    history: list[tuple[int, float]] = field(default_factory=list)


def train(model: TinyLM, batches: Sequence[tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]],
          steps: int, lr: float = 6e-4, weight_decay: float = 0.01,
          seed: int = 42, log_every: int = 10,
          on_step: Optional[Callable[[int, float], None]] = None) -> TrainResult:
    """Cycle through ``(ids, mask, harmony)`` batches for a fixed step count.

    Batches are visited in a seeded random order, reshuffled each epoch.
    Loss history holds every ``log_every``-th step plus the last.
    """
    if not batches:
        raise LMError("no batches to train on")
    if steps < 1:
        raise LMError("steps must be positive")
    opt = AdamW(model.params, lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng(seed)
    drop_rng = np.random.default_rng(rng.integers(2 ** 63)) if model.config.dropout > 0 else None
    order: list[int] = []
    history: list[tuple[int, float]] = []
    loss = float("nan")
    for step in range(1, steps + 1):
        if not order:
            order = rng.permutation(len(batches)).tolist()
        ids, mask, harmony = batches[order.pop()]
        loss, grads = model.loss_and_grads(ids, mask, harmony, drop_rng=drop_rng)
        opt.update(model.params, grads)
        if step % log_every == 0 or step == steps:
            history.append((step, loss))
        if on_step is not None:
            on_step(step, loss)
    return TrainResult(steps=steps, final_loss=loss, history=history)


# ---------------------------------------------------------------------------
# Sampling

@dataclass
class SampleResult:
    sequences: list[list[int]]      # generated ids only, prefix excluded
    stopped_on_end: list[bool]


def sample(model: TinyLM, prefix: Sequence[int], n_sequences: int,
           max_new_tokens: int, end_id: int, temperature: float = 1.0,
           top_k: Optional[int] = None, seed: int = 42,
           harmony: Optional[np.ndarray] = None) -> SampleResult:
    """Draw continuations of one shared prefix, batched with a KV cache.

    ``temperature=0`` is greedy argmax (all sequences identical); otherwise
    logits are divided by the temperature, optionally truncated to the top
    k entries, and sampled.  Generation stops per sequence at ``end_id``
    (which is not included in the output) or after ``max_new_tokens``.
    """
    if n_sequences < 1:
        raise LMError("n_sequences must be positive")
    if temperature < 0:
        raise LMError("temperature must be nonnegative")
    if top_k is not None and top_k < 1:
        raise LMError("top_k must be positive when given")
    prefix_arr = np.asarray(prefix, dtype=np.int64)
    if prefix_arr.ndim != 1 or prefix_arr.size == 0:
        raise LMError("prefix must be a nonempty id sequence")
    b = n_sequences
    rng = np.random.default_rng(seed)
    cache = model.start_cache(b)
    tiled = np.tile(prefix_arr, (b, 1))
    hmat = None
    if harmony is not None:
        hmat = np.tile(np.asarray(harmony, dtype=np.float64).reshape(1, 12), (b, 1))
    logits = model.extend(cache, tiled, hmat)[:, -1, :]
    out: list[list[int]] = [[] for _ in range(b)]
    done = np.zeros(b, dtype=bool)
    for _ in range(max_new_tokens):
        next_ids = _pick(logits, temperature, top_k, rng)
        for r in range(b):
            if done[r]:
                continue
            if int(next_ids[r]) == end_id:
                done[r] = True
            else:
                out[r].append(int(next_ids[r]))
        if done.all():
            break
        logits = model.extend(cache, next_ids[:, None], None)[:, -1, :]
    return SampleResult(sequences=out, stopped_on_end=done.tolist())


def _pick(logits: np.ndarray, temperature: float, top_k: Optional[int],
          rng: np.random.Generator) -> np.ndarray:
    if temperature == 0:
        return logits.argmax(axis=-1).astype(np.int64)
    z = logits / temperature
    if top_k is not None and top_k < z.shape[-1]:
        kth = np.partition(z, -top_k, axis=-1)[:, -top_k][:, None]
        z = np.where(z < kth, -np.inf, z)
    p = _softmax_last(z)
    cdf = np.cumsum(p, axis=-1)
    cdf[:, -1] = 1.0    # guard against rounding in the last bin
    u = rng.random((z.shape[0], 1))
    return (u > cdf).sum(axis=-1).astype(np.int64)


# ---------------------------------------------------------------------------
# Checkpoints

_CHECKPOINT_FORMAT = "tiny-lm-v1"


def save_checkpoint(path: str, model: TinyLM, step: int = 0,
                    optimizer: Optional[AdamW] = None) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, arr in model.params.items():
        arrays[f"p/{name}"] = arr
    if optimizer is not None:
        for name, arr in optimizer.m.items():
            arrays[f"m/{name}"] = arr
        for name, arr in optimizer.v.items():
            arrays[f"v/{name}"] = arr
    meta = {
        "format": _CHECKPOINT_FORMAT,
        "config": asdict(model.config),
        "step": step,
        "optimizer": None if optimizer is None else {
            "lr": optimizer.lr, "betas": list(optimizer.betas),
            "eps": optimizer.eps, "weight_decay": optimizer.weight_decay,
            "step_count": optimizer.step_count},
    }
    buf = io.BytesIO()
    np.savez(buf, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
             **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path: str) -> tuple[TinyLM, int, Optional[AdamW]]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format") != _CHECKPOINT_FORMAT:
            raise LMError(f"unrecognized checkpoint format in {path}")
        config = ModelConfig(**meta["config"])
        params = {name[2:]: data[name] for name in data.files if name.startswith("p/")}
        model = TinyLM(config=config, params=params)
        optimizer = None
        if meta["optimizer"] is not None:
            o = meta["optimizer"]
            optimizer = AdamW(params, lr=o["lr"], betas=tuple(o["betas"]),
                              eps=o["eps"], weight_decay=o["weight_decay"])
            optimizer.step_count = o["step_count"]
            optimizer.m = {name[2:]: data[name] for name in data.files if name.startswith("m/")}
            optimizer.v = {name[2:]: data[name] for name in data.files if name.startswith("v/")}
    return model, int(meta["step"]), optimizer
