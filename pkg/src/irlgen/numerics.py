"""Dense float64 helpers shared by every model: softmax, Adam, seeded streams,
and a central-difference gradient oracle.

Parameter collections ("param stores") are plain ``dict[str, np.ndarray]`` of
2-D float64 arrays. Anything that iterates them does so in sorted-name order.

Sign convention: every optimizer call in this package performs gradient
*ascent* on an objective. Code that minimizes a loss passes the negated
gradient.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple, Union

import numpy as np

ParamStore = Dict[str, np.ndarray]
Label = Union[str, int]


# ---------------------------------------------------------------------------
# softmax


def softmax(logits) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("softmax expects a non-empty 1-D vector")
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("softmax input contains non-finite values")
    z = np.exp(x - x.max())
    return z / z.sum()


def log_softmax(logits: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Row-wise log-softmax over the last axis.

    ``mask`` is a boolean vector over the last axis; ``False`` entries get
    probability exactly zero (log-prob ``-inf``).
    """
    x = np.asarray(logits, dtype=np.float64)
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    m = x.max(axis=-1, keepdims=True)
    shifted = x - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return shifted - lse


# ---------------------------------------------------------------------------
# param-store utilities


def sorted_store(params: ParamStore) -> ParamStore:
    return {k: params[k] for k in sorted(params)}


def zeros_like_store(params: ParamStore) -> ParamStore:
    return {k: np.zeros_like(params[k]) for k in sorted(params)}


def copy_store(params: ParamStore) -> ParamStore:
    return {k: np.array(params[k], dtype=np.float64, copy=True) for k in sorted(params)}


def check_same_shapes(a: ParamStore, b: ParamStore) -> None:
    if set(a) != set(b):
        raise ValueError(f"parameter names differ: {sorted(set(a) ^ set(b))}")
    for k in a:
        if a[k].shape != b[k].shape:
            raise ValueError(f"shape mismatch for {k!r}: {a[k].shape} vs {b[k].shape}")


def global_norm(grads: ParamStore) -> float:
    return math.sqrt(sum(float(np.sum(grads[k] ** 2)) for k in sorted(grads)))


def clip_by_global_norm(grads: ParamStore, max_norm: float | None) -> ParamStore:
    if max_norm is None:
        return grads
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {k: grads[k] * scale for k in sorted(grads)}


def all_finite(params: ParamStore) -> bool:
    return all(bool(np.all(np.isfinite(params[k]))) for k in params)


def scale_store(params: ParamStore, c: float) -> ParamStore:
    return {k: params[k] * c for k in sorted(params)}


def add_stores(a: ParamStore, b: ParamStore) -> ParamStore:
    check_same_shapes(a, b)
    return {k: a[k] + b[k] for k in sorted(a)}


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: ParamStore
    v: ParamStore
    t: int = 0

    @classmethod
    def zeros(cls, params: ParamStore) -> "AdamState":
        return cls(m=zeros_like_store(params), v=zeros_like_store(params), t=0)


def adam_step(
    params: ParamStore,
    grads: ParamStore,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[ParamStore, AdamState]:
    """One bias-corrected Adam update moving ``params`` *along* ``grads``.

    Pure: inputs are not modified. Returns the new params and state.
    """
    check_same_shapes(params, grads)
    check_same_shapes(params, state.m)
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ValueError("Adam betas must lie in [0, 1)")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    t = state.t + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new_p, new_m, new_v = {}, {}, {}
    for k in sorted(params):
        g = grads[k]
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * (g * g)
        new_p[k] = params[k] + lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_m[k] = m
        new_v[k] = v
    return new_p, AdamState(m=new_m, v=new_v, t=t)


# ---------------------------------------------------------------------------
# finite differences


def finite_diff_grad(
    f: Callable[[ParamStore], float], params: ParamStore, h: float = 1e-5
) -> ParamStore:
    """Central-difference gradient of a deterministic scalar function."""
    if h <= 0:
        raise ValueError("h must be positive")
    base = copy_store(params)
    grads = zeros_like_store(base)
    for k in sorted(base):
        arr = base[k]
        flat = arr.reshape(-1)
        gflat = grads[k].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(base))
            flat[i] = orig - h
            fm = float(f(base))
            flat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise FloatingPointError(f"non-finite objective while perturbing {k}[{i}]")
            gflat[i] = (fp - fm) / (2.0 * h)
    return grads


# ---------------------------------------------------------------------------
# counter-based random streams


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    The stream is identified by ``(seed, path)``; the pair is hashed into a
    Philox key, so children can be derived in any order (or in parallel)
    without changing what any of them produces.
    """

    seed: int
    path: Tuple[Label, ...] = field(default=())

    def child(self, *labels: Label) -> "RngStream":
        for lab in labels:
            if not isinstance(lab, (str, int)) or isinstance(lab, bool):
                raise TypeError(f"stream labels must be str or int, got {type(lab).__name__}")
        return RngStream(self.seed, self.path + tuple(labels))

    def key(self) -> int:
        payload = json.dumps([int(self.seed), list(self.path)], separators=(",", ":"))
        digest = hashlib.blake2b(payload.encode("utf-8"), digest_size=16).digest()
        return int.from_bytes(digest, "little")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key()))

    def uniform(self, size) -> np.ndarray:
        return self.generator().random(size)
