"""Reward approximator r_phi(s_t, a_t) and the importance-weighted r-step.

The state s_t is summarized by an LSTM encoder that has read BOS, a_1 ...
a_{t-1}; the score is a one-hidden-layer tanh MLP over
``concat(h_t, embed(a_t))`` with a linear scalar output. Dropout (inverted
scaling) hits the MLP hidden layer only, and only in train mode.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import lstm
from .numerics import ParamStore, RngStream
from .policy import BOS, EOS, N_RESERVED, Trajectory, pad_batch, valid_mask


@dataclass(frozen=True)
class RewardDims:
    vocab_size: int
    emb_dim: int
    hid_dim: int
    mlp_dim: int

    def __post_init__(self):
        if self.vocab_size <= N_RESERVED or min(self.emb_dim, self.hid_dim, self.mlp_dim) < 1:
            raise ValueError(f"invalid reward dims {self}")

    def as_dict(self) -> dict:
        return {"vocab_size": self.vocab_size, "emb_dim": self.emb_dim,
                "hid_dim": self.hid_dim, "mlp_dim": self.mlp_dim}


def _expected_shapes(d: RewardDims) -> dict:
    V, E, H, Dm = d.vocab_size, d.emb_dim, d.hid_dim, d.mlp_dim
    shapes = {"embed": (V, E), "mlp_W1": (H + E, Dm), "mlp_b1": (1, Dm),
              "mlp_W2": (Dm, 1), "mlp_b2": (1, 1)}
    for g in lstm.GATES:
        shapes[f"enc_W_{g}"] = (E + H, H)
        shapes[f"enc_b_{g}"] = (1, H)
    return shapes


@dataclass
class RewardParams:
    dims: RewardDims
    arrays: ParamStore
    keep_prob: float = 0.75

    def __post_init__(self):
        if not (0.0 < self.keep_prob <= 1.0):
            raise ValueError("keep_prob must lie in (0, 1]")
        expected = _expected_shapes(self.dims)
        if set(self.arrays) != set(expected):
            raise ValueError(f"reward arrays must be exactly {sorted(expected)}")
        for k, shape in expected.items():
            if self.arrays[k].shape != shape:
                raise ValueError(f"{k} has shape {self.arrays[k].shape}, expected {shape}")
        self.arrays = {k: np.asarray(self.arrays[k], dtype=np.float64) for k in sorted(self.arrays)}

    def replace(self, arrays: ParamStore) -> "RewardParams":
        return RewardParams(self.dims, arrays, self.keep_prob)


def init_reward(dims: RewardDims, rng: RngStream, keep_prob: float = 0.75,
                scale: float = 0.08) -> RewardParams:
    gen = rng.generator()
    V, E, H, Dm = dims.vocab_size, dims.emb_dim, dims.hid_dim, dims.mlp_dim
    arrays: ParamStore = {"embed": gen.uniform(-scale, scale, size=(V, E))}
    lstm.init_lstm(arrays, "enc_", E, H, gen, scale=scale)
    arrays["mlp_W1"] = gen.uniform(-scale, scale, size=(H + E, Dm))
    arrays["mlp_b1"] = np.zeros((1, Dm))
    arrays["mlp_W2"] = gen.uniform(-scale, scale, size=(Dm, 1))
    arrays["mlp_b2"] = np.zeros((1, 1))
    return RewardParams(dims, arrays, keep_prob)


def zero_reward(dims: RewardDims, keep_prob: float = 0.75) -> RewardParams:
    return RewardParams(dims, {k: np.zeros(s) for k, s in _expected_shapes(dims).items()}, keep_prob)


def _validate(tokens: Sequence[int], vocab_size: int) -> None:
    for pos, tok in enumerate(tokens):
        if not (EOS <= tok < vocab_size):
            raise ValueError(f"token {tok} at position {pos} is out of range for the reward model")


def dropout_mask(rparams: RewardParams, length: int, rng: RngStream) -> np.ndarray:
    """Scaled keep-mask of shape (length, mlp_dim) drawn from ``rng``."""
    keep = rparams.keep_prob
    if keep >= 1.0:
        return np.ones((length, rparams.dims.mlp_dim))
    u = rng.uniform((length, rparams.dims.mlp_dim))
    return (u < keep) / keep


def _pad_masks(masks: Sequence[np.ndarray], T: int, Dm: int) -> np.ndarray:
    out = np.ones((len(masks), T, Dm))
    for b, m in enumerate(masks):
        out[b, :m.shape[0]] = m
    return out


@dataclass
class _RewardCache:
    tokens: np.ndarray
    inputs: np.ndarray
    lstm_cache: lstm.LstmCache
    feat: np.ndarray
    hid: np.ndarray
    drop: Optional[np.ndarray]


def _forward(rparams: RewardParams, tokens: np.ndarray, drop: Optional[np.ndarray]):
    a = rparams.arrays
    B, T = tokens.shape
    inputs = np.concatenate([np.full((B, 1), BOS, dtype=np.int64), tokens[:, :-1]], axis=1)
    hs, cache = lstm.forward(a, "enc_", a["embed"][inputs])
    feat = np.concatenate([hs, a["embed"][tokens]], axis=2)
    hid = np.tanh(feat @ a["mlp_W1"] + a["mlp_b1"])
    h_out = hid if drop is None else hid * drop
    r = (h_out @ a["mlp_W2"] + a["mlp_b2"])[:, :, 0]
    return r, _RewardCache(tokens, inputs, cache, feat, hid, drop)


def _backward(rparams: RewardParams, cache: _RewardCache, dr: np.ndarray) -> ParamStore:
    a = rparams.arrays
    d = rparams.dims
    V, E, H, Dm = d.vocab_size, d.emb_dim, d.hid_dim, d.mlp_dim
    h_out = cache.hid if cache.drop is None else cache.hid * cache.drop
    grads: ParamStore = {
        "mlp_W2": h_out.reshape(-1, Dm).T @ dr.reshape(-1, 1),
        "mlp_b2": np.array([[dr.sum()]]),
    }
    dh_out = dr[:, :, None] * a["mlp_W2"][:, 0][None, None, :]
    dhid = dh_out if cache.drop is None else dh_out * cache.drop
    dpre = dhid * (1.0 - cache.hid ** 2)
    grads["mlp_W1"] = cache.feat.reshape(-1, H + E).T @ dpre.reshape(-1, Dm)
    grads["mlp_b1"] = dpre.reshape(-1, Dm).sum(axis=0, keepdims=True)
    dfeat = dpre @ a["mlp_W1"].T
    lgrads, dxs = lstm.backward(a, "enc_", cache.lstm_cache, dfeat[:, :, :H])
    grads.update(lgrads)
    d_embed = np.zeros((V, E))
    np.add.at(d_embed, cache.inputs.reshape(-1), dxs.reshape(-1, E))
    np.add.at(d_embed, cache.tokens.reshape(-1), dfeat[:, :, H:].reshape(-1, E))
    grads["embed"] = d_embed
    return {k: grads[k] for k in sorted(grads)}


def batch_step_rewards(rparams: RewardParams, seqs: Sequence[Sequence[int]],
                       masks: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    """Padded (B, T_max) per-step rewards; padding positions are 0."""
    tokens, lengths = pad_batch(seqs)
    drop = None if masks is None else _pad_masks(masks, tokens.shape[1], rparams.dims.mlp_dim)
    r, _ = _forward(rparams, tokens, drop)
    return np.where(valid_mask(lengths, tokens.shape[1]), r, 0.0)


def padded_step_rewards(rparams: RewardParams, tokens: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Deterministic per-step rewards of an already padded (B, T) batch."""
    r, _ = _forward(rparams, tokens, None)
    return np.where(valid_mask(lengths, tokens.shape[1]), r, 0.0)


def batch_trajectory_rewards(rparams: RewardParams, seqs: Sequence[Sequence[int]],
                             masks: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    return batch_step_rewards(rparams, seqs, masks).sum(axis=1)


def step_rewards(rparams: RewardParams, tokens: Sequence[int], train_mode: bool = False,
                 rng: Optional[RngStream] = None) -> np.ndarray:
    tokens = [int(t) for t in tokens]
    _validate(tokens, rparams.dims.vocab_size)
    if not tokens:
        return np.zeros(0)
    masks = None
    if train_mode:
        if rng is None:
            raise ValueError("train_mode requires an rng stream for dropout")
        masks = [dropout_mask(rparams, len(tokens), rng)]
    return batch_step_rewards(rparams, [tokens], masks)[0]


def trajectory_reward(rparams: RewardParams, tokens: Sequence[int], train_mode: bool = False,
                      rng: Optional[RngStream] = None) -> float:
    return float(np.sum(step_rewards(rparams, tokens, train_mode, rng)))


def reward_grad(rparams: RewardParams, seqs: Sequence[Sequence[int]], coefs: np.ndarray,
                masks: Optional[Sequence[np.ndarray]] = None):
    """Value and gradient of ``sum_b coefs[b] * R_phi(seqs[b])``."""
    tokens, lengths = pad_batch(seqs)
    T = tokens.shape[1]
    drop = None if masks is None else _pad_masks(masks, T, rparams.dims.mlp_dim)
    r, cache = _forward(rparams, tokens, drop)
    valid = valid_mask(lengths, T)
    R = np.where(valid, r, 0.0).sum(axis=1)
    dr = np.where(valid, np.asarray(coefs, dtype=np.float64)[:, None], 0.0)
    return R, _backward(rparams, cache, dr)


# ---------------------------------------------------------------------------
# importance weights


@dataclass
class ImportanceWeights:
    log_w: np.ndarray
    w: np.ndarray

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.w ** 2))


def normalize_log_weights(log_w) -> ImportanceWeights:
    log_w = np.asarray(log_w, dtype=np.float64)
    if log_w.ndim != 1 or log_w.size == 0:
        raise ValueError("need at least one log-weight")
    z = np.exp(log_w - log_w.max())
    return ImportanceWeights(log_w=log_w, w=z / z.sum())


def importance_weights(rparams: RewardParams, gen_batch: Sequence[Trajectory],
                       rewards: Optional[np.ndarray] = None) -> ImportanceWeights:
    """Self-normalized w_j proportional to exp(R_phi(tau_j)) / q_theta(tau_j).

    ``rewards`` may carry precomputed R_phi values (e.g. under dropout);
    otherwise the deterministic reward is used.
    """
    if len(gen_batch) == 0:
        raise ValueError("need at least one generated trajectory")
    if rewards is None:
        rewards = batch_trajectory_rewards(rparams, [t.tokens for t in gen_batch])
    logq = np.array([t.total_logp for t in gen_batch])
    return normalize_log_weights(np.asarray(rewards) - logq)


def r_step_grad(rparams: RewardParams, real_batch: Sequence[Sequence[int]],
                gen_batch: Sequence[Trajectory], rng: RngStream, train_mode: bool = True):
    """Importance-sampled ascent direction for the reward log-likelihood.

    Returns ``(grads, diagnostics)``. The weights are computed from the same
    (possibly dropped-out) forward pass that is differentiated, and are held
    constant in the gradient.
    """
    N, M = len(real_batch), len(gen_batch)
    if N == 0 or M == 0:
        raise ValueError("r-step needs non-empty real and generated batches")
    seqs: List[Sequence[int]] = [list(s) for s in real_batch] + [t.tokens for t in gen_batch]
    masks = None
    if train_mode and rparams.keep_prob < 1.0:
        masks = ([dropout_mask(rparams, len(s), rng.child("real", i)) for i, s in enumerate(real_batch)]
                 + [dropout_mask(rparams, t.length, rng.child("gen", j)) for j, t in enumerate(gen_batch)])
    # Forward once to get rewards for the weights, then differentiate with
    # those weights frozen.
    tokens, lengths = pad_batch(seqs)
    T = tokens.shape[1]
    drop = None if masks is None else _pad_masks(masks, T, rparams.dims.mlp_dim)
    r, cache = _forward(rparams, tokens, drop)
    valid = valid_mask(lengths, T)
    R = np.where(valid, r, 0.0).sum(axis=1)
    weights = importance_weights(rparams, gen_batch, rewards=R[N:])
    coefs = np.concatenate([np.full(N, 1.0 / N), -weights.w])
    grads = _backward(rparams, cache, np.where(valid, coefs[:, None], 0.0))
    diag = {
        "mean_real_reward": float(R[:N].mean()),
        "mean_gen_reward": float(R[N:].mean()),
        "weighted_gen_reward": float(np.dot(weights.w, R[N:])),
        "ess": weights.ess,
    }
    return grads, diag
