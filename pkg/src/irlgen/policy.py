"""The generator policy: embedding -> single-layer LSTM -> affine -> softmax.

Token ids 0 and 1 are reserved for BOS and EOS. Two sequence modes exist:

* ``"fixed-length"``: exactly ``max_len`` tokens, BOS and EOS are never emitted.
* ``"eos-terminated"``: generation stops after EOS (which is part of the
  sequence) or at ``max_len``. BOS is never emitted.

Both modes mask disallowed ids to probability zero, and every log-probability
reported here is taken from the masked distribution.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from . import lstm
from .numerics import ParamStore, RngStream, log_softmax

BOS = 0
EOS = 1
N_RESERVED = 2
MODES = ("fixed-length", "eos-terminated")


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown sequence mode {mode!r}; expected one of {MODES}")
    return mode


@dataclass(frozen=True)
class GenDims:
    vocab_size: int  # includes the reserved ids
    emb_dim: int
    hid_dim: int

    def __post_init__(self):
        if self.vocab_size <= N_RESERVED or self.emb_dim < 1 or self.hid_dim < 1:
            raise ValueError(f"invalid generator dims {self}")

    @property
    def n_content(self) -> int:
        return self.vocab_size - N_RESERVED

    def as_dict(self) -> dict:
        return {"vocab_size": self.vocab_size, "emb_dim": self.emb_dim, "hid_dim": self.hid_dim}


@dataclass
class GeneratorParams:
    dims: GenDims
    arrays: ParamStore

    def __post_init__(self):
        V, E, H = self.dims.vocab_size, self.dims.emb_dim, self.dims.hid_dim
        expected = {"embed": (V, E), "out_W": (H, V), "out_b": (1, V)}
        for g in lstm.GATES:
            expected[f"W_{g}"] = (E + H, H)
            expected[f"b_{g}"] = (1, H)
        if set(self.arrays) != set(expected):
            raise ValueError(f"generator arrays must be exactly {sorted(expected)}")
        for k, shape in expected.items():
            if self.arrays[k].shape != shape:
                raise ValueError(f"{k} has shape {self.arrays[k].shape}, expected {shape}")
        self.arrays = {k: np.asarray(self.arrays[k], dtype=np.float64) for k in sorted(self.arrays)}

    def replace(self, arrays: ParamStore) -> "GeneratorParams":
        return GeneratorParams(self.dims, arrays)


@dataclass
class LstmState:
    hidden: np.ndarray
    cell: np.ndarray


@dataclass
class Trajectory:
    tokens: List[int]
    step_logps: np.ndarray = field(repr=False)

    @property
    def length(self) -> int:
        return len(self.tokens)

    @property
    def total_logp(self) -> float:
        return float(np.sum(self.step_logps))


def init_generator(dims: GenDims, rng: RngStream, scale: float = 0.08) -> GeneratorParams:
    """Uniform(-scale, scale) weights, zero biases except forget gate = 1."""
    gen = rng.generator()
    V, E, H = dims.vocab_size, dims.emb_dim, dims.hid_dim
    arrays: ParamStore = {"embed": gen.uniform(-scale, scale, size=(V, E))}
    lstm.init_lstm(arrays, "", E, H, gen, scale=scale)
    arrays["out_W"] = gen.uniform(-scale, scale, size=(H, V))
    arrays["out_b"] = np.zeros((1, V))
    return GeneratorParams(dims, arrays)


def zero_generator(dims: GenDims) -> GeneratorParams:
    V, E, H = dims.vocab_size, dims.emb_dim, dims.hid_dim
    arrays: ParamStore = {"embed": np.zeros((V, E)), "out_W": np.zeros((H, V)), "out_b": np.zeros((1, V))}
    lstm.zero_lstm(arrays, "", E, H)
    return GeneratorParams(dims, arrays)


def output_mask(vocab_size: int, mode: str) -> np.ndarray:
    mask = np.ones(vocab_size, dtype=bool)
    mask[BOS] = False
    if check_mode(mode) == "fixed-length":
        mask[EOS] = False
    return mask


def validate_tokens(tokens: Sequence[int], vocab_size: int, mode: str) -> None:
    check_mode(mode)
    low = N_RESERVED if mode == "fixed-length" else EOS
    for pos, tok in enumerate(tokens):
        if not (low <= tok < vocab_size):
            raise ValueError(f"token {tok} at position {pos} is not valid in {mode} mode")
        if tok == EOS and pos != len(tokens) - 1:
            raise ValueError(f"EOS may only appear as the final token (found at {pos})")


def pad_batch(seqs: Sequence[Sequence[int]], pad: int = EOS):
    """Right-pad to a (B, T_max) int array; returns (tokens, lengths)."""
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    T = int(lengths.max()) if len(seqs) else 0
    out = np.full((len(seqs), T), pad, dtype=np.int64)
    for b, s in enumerate(seqs):
        out[b, :len(s)] = s
    return out, lengths


def valid_mask(lengths: np.ndarray, T: int) -> np.ndarray:
    return np.arange(T)[None, :] < lengths[:, None]


# ---------------------------------------------------------------------------
# single-step API


def forward_step(params: GeneratorParams, state: LstmState, prev_token: int):
    if not (0 <= prev_token < params.dims.vocab_size):
        raise ValueError(f"token {prev_token} out of range")
    W, b = lstm.stacked(params.arrays, "")
    x = params.arrays["embed"][prev_token][None, :]
    h, c = lstm.step(W, b, x, state.hidden[None, :], state.cell[None, :])
    logits = h @ params.arrays["out_W"] + params.arrays["out_b"]
    return LstmState(h[0], c[0]), logits[0]


def initial_state(params: GeneratorParams) -> LstmState:
    H = params.dims.hid_dim
    return LstmState(np.zeros(H), np.zeros(H))


# ---------------------------------------------------------------------------
# sampling


def _sample_index(logp: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row; zero-probability ids are never selected."""
    p = np.exp(logp)
    cdf = np.cumsum(p, axis=1)
    x = u[:, None] * cdf[:, -1:]
    idx = (cdf <= x).sum(axis=1)
    return np.minimum(idx, logp.shape[1] - 1)


def rollout(params: GeneratorParams, h, c, prev: np.ndarray, uniforms: np.ndarray, mode: str,
            done: np.ndarray | None = None):
    """Continue B sequences for ``uniforms.shape[1]`` steps from a given LSTM state.

    Returns (tokens, step_logps, lengths). In eos-terminated mode rows stop
    after emitting EOS; later positions hold EOS padding with log-prob 0.
    """
    arrays = params.arrays
    W, b = lstm.stacked(arrays, "")
    mask = output_mask(params.dims.vocab_size, mode)
    B, n = uniforms.shape
    tokens = np.full((B, n), EOS, dtype=np.int64)
    logps = np.zeros((B, n))
    lengths = np.zeros(B, dtype=np.int64)
    alive = np.ones(B, dtype=bool) if done is None else ~done
    for t in range(n):
        if not alive.any():
            break
        h, c = lstm.step(W, b, arrays["embed"][prev], h, c)
        lp = log_softmax(h @ arrays["out_W"] + arrays["out_b"], mask)
        tok = _sample_index(lp, uniforms[:, t])
        tokens[alive, t] = tok[alive]
        logps[alive, t] = lp[np.arange(B), tok][alive]
        lengths[alive] += 1
        prev = tok
        if mode == "eos-terminated":
            alive = alive & (tok != EOS)
    return tokens, logps, lengths


def _to_trajectories(tokens, logps, lengths) -> List[Trajectory]:
    return [Trajectory([int(x) for x in tokens[b, :lengths[b]]], logps[b, :lengths[b]].copy())
            for b in range(tokens.shape[0])]


def _sample_from_uniforms(params: GeneratorParams, U: np.ndarray, mode: str) -> List[Trajectory]:
    B = U.shape[0]
    H = params.dims.hid_dim
    prev = np.full(B, BOS, dtype=np.int64)
    toks, lps, lens = rollout(params, np.zeros((B, H)), np.zeros((B, H)), prev, U, mode)
    return _to_trajectories(toks, lps, lens)


def sample_trajectory(params: GeneratorParams, max_len: int, mode: str, rng: RngStream) -> Trajectory:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    check_mode(mode)
    return _sample_from_uniforms(params, rng.uniform((1, max_len)), mode)[0]


def sample_batch(params: GeneratorParams, n: int, max_len: int, mode: str,
                 rng: RngStream) -> List[Trajectory]:
    """``n`` trajectories; sequence ``i`` consumes only the stream ``rng.child(i)``."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    check_mode(mode)
    if n == 0:
        return []
    U = np.stack([rng.child(i).uniform(max_len) for i in range(n)])
    return _sample_from_uniforms(params, U, mode)


# ---------------------------------------------------------------------------
# teacher forcing, log-probabilities and gradients


@dataclass
class _TFCache:
    inputs: np.ndarray
    tokens: np.ndarray
    lstm_cache: lstm.LstmCache
    hs: np.ndarray
    probs: np.ndarray


def teacher_forced(params: GeneratorParams, tokens: np.ndarray, mode: str):
    """Per-step masked log-probs of a padded (B, T) batch, plus a backward cache."""
    arrays = params.arrays
    B, T = tokens.shape
    inputs = np.concatenate([np.full((B, 1), BOS, dtype=np.int64), tokens[:, :-1]], axis=1)
    hs, cache = lstm.forward(arrays, "", arrays["embed"][inputs])
    logits = hs @ arrays["out_W"] + arrays["out_b"]
    lp = log_softmax(logits, output_mask(params.dims.vocab_size, mode))
    step_lp = np.take_along_axis(lp, tokens[:, :, None], axis=2)[:, :, 0]
    return step_lp, _TFCache(inputs, tokens, cache, hs, np.exp(lp))


def weighted_logp_grad(params: GeneratorParams, tokens: np.ndarray, lengths: np.ndarray,
                       weights: np.ndarray, mode: str):
    """Value and gradient of ``sum_{b,t valid} weights[b,t] * log pi(tokens[b,t] | prefix)``."""
    step_lp, cache = teacher_forced(params, tokens, mode)
    B, T = tokens.shape
    w = np.where(valid_mask(lengths, T), weights, 0.0)
    value = float(np.sum(w * np.where(w != 0.0, step_lp, 0.0)))
    dlogits = -cache.probs * w[:, :, None]
    bi, ti = np.nonzero(w)
    dlogits[bi, ti, tokens[bi, ti]] += w[bi, ti]
    arrays = params.arrays
    V, E, H = params.dims.vocab_size, params.dims.emb_dim, params.dims.hid_dim
    grads: ParamStore = {
        "out_W": cache.hs.reshape(-1, H).T @ dlogits.reshape(-1, V),
        "out_b": dlogits.reshape(-1, V).sum(axis=0, keepdims=True),
    }
    dhs = dlogits @ arrays["out_W"].T
    lgrads, dxs = lstm.backward(arrays, "", cache.lstm_cache, dhs)
    grads.update(lgrads)
    d_embed = np.zeros((V, E))
    np.add.at(d_embed, cache.inputs.reshape(-1), dxs.reshape(-1, E))
    grads["embed"] = d_embed
    return value, {k: grads[k] for k in sorted(grads)}


def log_prob(params: GeneratorParams, tokens: Sequence[int], mode: str):
    """(total log q(tokens), per-step log-probs)."""
    tokens = [int(t) for t in tokens]
    validate_tokens(tokens, params.dims.vocab_size, mode)
    if not tokens:
        return 0.0, []
    step_lp, _ = teacher_forced(params, np.array([tokens], dtype=np.int64), mode)
    per_step = [float(x) for x in step_lp[0]]
    return float(np.sum(step_lp[0])), per_step


def batch_log_prob(params: GeneratorParams, seqs: Sequence[Sequence[int]], mode: str) -> np.ndarray:
    """Total log-prob of each sequence in a batch (no validation)."""
    tokens, lengths = pad_batch(seqs)
    step_lp, _ = teacher_forced(params, tokens, mode)
    return np.where(valid_mask(lengths, tokens.shape[1]), step_lp, 0.0).sum(axis=1)


def mle_loss_and_grad(params: GeneratorParams, batch: Sequence[Sequence[int]], mode: str):
    """Mean per-token NLL of a teacher-forced batch and its exact gradient.

    The returned gradient is of the loss itself; to train, step along its
    negation.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    for seq in batch:
        validate_tokens(seq, params.dims.vocab_size, mode)
    tokens, lengths = pad_batch(batch)
    n_tok = int(lengths.sum())
    if n_tok == 0:
        raise ValueError("batch contains no tokens")
    weights = np.full(tokens.shape, -1.0 / n_tok)
    value, grads = weighted_logp_grad(params, tokens, lengths, weights, mode)
    return value, grads


def entropy_estimate(params: GeneratorParams, n_samples: int, max_len: int, mode: str,
                     rng: RngStream) -> float:
    """Monte Carlo estimate of the sequence entropy -E[log q(tau)]."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    trajs = sample_batch(params, n_samples, max_len, mode, rng)
    return float(np.mean([-t.total_logp for t in trajs]))
