"""Alternating reward (r-step) and generator (g-step) training.

One outer iteration runs ``n_r`` reward updates followed by ``n_g`` generator
updates. Generator updates use the entropy-regularized policy gradient with
per-step returns ``Q_t = r(s_t, a_t) + V(s_{t+1})``, where ``V`` is averaged
over ``K`` Monte Carlo continuations sampled from the current policy.
"""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import lstm
from .numerics import (AdamState, RngStream, adam_step, all_finite, clip_by_global_norm,
                       scale_store)
from .policy import (BOS, EOS, GeneratorParams, Trajectory, check_mode, mle_loss_and_grad,
                     pad_batch, rollout, sample_batch, weighted_logp_grad)
from .reward import (RewardParams, batch_step_rewards, batch_trajectory_rewards, padded_step_rewards,
                     r_step_grad)

log = logging.getLogger(__name__)

BASELINES = ("none", "batch-mean")


@dataclass
class TrainConfig:
    N: int = 64
    M: int = 64
    n_r: int = 10
    n_g: int = 1
    alpha: float = 0.0004
    beta: float = 0.005
    K: int = 8
    pretrain_epochs: int = 50
    max_len: int = 20
    mode: str = "fixed-length"
    seed: int = 0
    total_iterations: int = 100
    baseline: str = "none"
    clip_norm: Optional[float] = 5.0
    threads: int = 1
    eval_samples: int = 1000
    pretrain_lr: Optional[float] = None  # defaults to beta
    pretrain_batch: Optional[int] = None  # defaults to N

    def __post_init__(self):
        for name in ("N", "M", "n_r", "n_g", "K", "max_len", "threads", "eval_samples"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("pretrain_epochs", "total_iterations"):
            if int(getattr(self, name)) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("learning rates must be positive")
        if self.pretrain_lr is not None and self.pretrain_lr <= 0:
            raise ValueError("pretrain_lr must be positive or null")
        if self.pretrain_batch is not None and self.pretrain_batch < 1:
            raise ValueError("pretrain_batch must be >= 1 or null")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive or null")
        check_mode(self.mode)
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}")


@dataclass
class IterationRecord:
    iteration: int
    g_objective: float
    mean_real_reward: float
    mean_gen_reward: float
    entropy: float
    ess: float
    nll_oracle: Optional[float] = None
    wall_time: Optional[float] = None

    def to_json(self, include_wall_time: bool = False) -> str:
        d = asdict(self)
        if not include_wall_time:
            d.pop("wall_time")
        return json.dumps(d, sort_keys=True)


@dataclass
class TrainReport:
    records: List[IterationRecord] = field(default_factory=list)

    def to_jsonl(self, include_wall_time: bool = False) -> str:
        return "".join(r.to_json(include_wall_time) + "\n" for r in self.records)


class TrainingDiverged(RuntimeError):
    def __init__(self, record: IterationRecord, what: str):
        super().__init__(f"non-finite {what} at iteration {record.iteration}")
        self.record = record


# ---------------------------------------------------------------------------
# returns


RETURN_CHUNK = 32


def _returns_chunk(gparams: GeneratorParams, rparams: RewardParams,
                   trajs: Sequence[Trajectory], rngs: Sequence[RngStream], K: int, mode: str,
                   max_len: Optional[int]) -> List[np.ndarray]:
    """Vectorized returns for a handful of trajectories (one stream each)."""
    arr = gparams.arrays
    Ts = [t.length for t in trajs]
    # fixed-length continuations end at T; eos-terminated ones at EOS or max_len
    horizons = [T if mode == "fixed-length" or max_len is None else max_len for T in Ts]
    out = [np.zeros(0) if T == 0 else None for T in Ts]
    live = [j for j, T in enumerate(Ts) if T > 0]
    if not live:
        return out
    r = batch_step_rewards(rparams, [trajs[j].tokens for j in live])
    for i, j in enumerate(live):
        out[j] = r[i, :Ts[j]].copy()
    need = [j for j in live if Ts[j] > 1]
    if not need:
        return out
    # cache.hs[:, k] is the state after k inputs. A continuation from prefix
    # a_{1:t} starts from the state after BOS .. a_{t-1} (index t) and feeds a_t.
    inputs, _ = pad_batch([[BOS] + trajs[j].tokens[:-1] for j in need])
    _, cache = lstm.forward(arr, "", arr["embed"][inputs])
    n_steps = max(horizons[j] for j in need) - 1
    width = max(horizons[j] for j in need)
    row_j, row_t, h0, c0, prev, U, prefix = [], [], [], [], [], [], []
    for i, j in enumerate(need):
        T, n = Ts[j], horizons[j] - 1
        # uniforms for continuation k from prefix a_{1:t} live at u[t - 1, k]
        u = rngs[j].uniform((T - 1, K, n)).reshape((T - 1) * K, n)
        U.append(np.concatenate([u, np.zeros((u.shape[0], n_steps - n))], axis=1))
        row_j.append(np.full((T - 1) * K, j))
        row_t.append(np.repeat(np.arange(1, T), K))
        h0.append(np.repeat(cache.hs[i, 1:T], K, axis=0))
        c0.append(np.repeat(cache.cs[i, 1:T], K, axis=0))
        toks = np.asarray(trajs[j].tokens, dtype=np.int64)
        prev.append(np.repeat(toks[:T - 1], K))
        prefix.append(np.tile(np.pad(toks, (0, width - T), constant_values=EOS), ((T - 1) * K, 1)))
    row_j, row_t = np.concatenate(row_j), np.concatenate(row_t)
    cont, _, cont_len = rollout(gparams, np.concatenate(h0), np.concatenate(c0),
                                np.concatenate(prev), np.concatenate(U), mode)
    limit = np.array([horizons[j] for j in row_j]) - row_t
    lengths = row_t + np.minimum(cont_len, limit)
    cols = np.arange(width)[None, :]
    shifted = np.take_along_axis(cont, np.clip(cols - row_t[:, None], 0, n_steps - 1), axis=1)
    full = np.where(cols < row_t[:, None], np.concatenate(prefix), shifted)
    full = np.where(cols < lengths[:, None], full, EOS)
    rr = padded_step_rewards(rparams, full, lengths)
    future = np.where(cols >= row_t[:, None], rr, 0.0).sum(axis=1)
    start = 0
    for j in need:
        T = Ts[j]
        V = future[start:start + (T - 1) * K].reshape(T - 1, K).mean(axis=1)
        out[j][:T - 1] += V
        start += (T - 1) * K
    return out


def estimate_returns(gparams: GeneratorParams, rparams: RewardParams, traj: Trajectory, K: int,
                     rng: RngStream, mode: str = "fixed-length",
                     max_len: Optional[int] = None) -> np.ndarray:
    """Per-step returns Q_1 .. Q_T for one trajectory.

    Q_T is the last step reward; earlier Q_t add the mean reward-to-go of K
    continuations sampled from the policy after prefix a_{1:t}. Continuation
    ``k`` from prefix ``t`` always consumes the same block of ``rng``'s
    uniforms, whatever else is evaluated alongside it. Rewards are evaluated
    without dropout.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    check_mode(mode)
    return _returns_chunk(gparams, rparams, [traj], [rng], K, mode, max_len)[0]


def estimate_returns_batch(gparams: GeneratorParams, rparams: RewardParams,
                           trajs: Sequence[Trajectory], K: int, rng: RngStream,
                           mode: str = "fixed-length", max_len: Optional[int] = None,
                           threads: int = 1) -> List[np.ndarray]:
    """Returns for every trajectory; trajectory ``j`` uses stream ``rng.child(j)``.

    Work is split into fixed chunks of trajectories, so the thread count
    never changes the result.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    check_mode(mode)
    starts = list(range(0, len(trajs), RETURN_CHUNK))

    def one(start):
        idx = range(start, min(start + RETURN_CHUNK, len(trajs)))
        return _returns_chunk(gparams, rparams, [trajs[j] for j in idx],
                              [rng.child(j) for j in idx], K, mode, max_len)

    if threads <= 1:
        parts = [one(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, starts))
    return [q for part in parts for q in part]


# ---------------------------------------------------------------------------
# generator gradient


def advantages(batch: Sequence[Trajectory], returns: Sequence[np.ndarray],
               baseline: str = "none") -> List[np.ndarray]:
    """A_t = Q_t - log pi(a_t|s_t) - 1, optionally centred by the batch mean."""
    if len(batch) != len(returns):
        raise ValueError(f"{len(returns)} return sequences for {len(batch)} trajectories")
    if baseline not in BASELINES:
        raise ValueError(f"unknown baseline {baseline!r}")
    adv = []
    for traj, Q in zip(batch, returns):
        Q = np.asarray(Q, dtype=np.float64)
        if Q.shape != (traj.length,):
            raise ValueError(f"returns of length {Q.shape} for a trajectory of length {traj.length}")
        adv.append(Q - np.asarray(traj.step_logps) - 1.0)
    if baseline == "batch-mean":
        flat = np.concatenate(adv) if adv else np.zeros(0)
        if flat.size:
            b = flat.mean()
            adv = [a - b for a in adv]
    return adv


def g_surrogate_and_grad(gparams: GeneratorParams, batch: Sequence[Trajectory],
                         adv: Sequence[np.ndarray], mode: str):
    """(1/M) sum_j sum_t A_jt log pi(a_jt|s_jt) with A frozen, and its gradient."""
    M = len(batch)
    if M == 0:
        raise ValueError("empty batch")
    tokens, lengths = pad_batch([t.tokens for t in batch])
    W = np.zeros(tokens.shape)
    for j, a in enumerate(adv):
        W[j, :len(a)] = a / M
    return weighted_logp_grad(gparams, tokens, lengths, W, mode)


def g_step_grad(gparams: GeneratorParams, batch: Sequence[Trajectory],
                returns: Sequence[np.ndarray], mode: str = "fixed-length",
                baseline: str = "none"):
    """Ascent direction for expected reward plus entropy."""
    _, grads = g_surrogate_and_grad(gparams, batch, advantages(batch, returns, baseline), mode)
    return grads


# ---------------------------------------------------------------------------
# steps and loops


def pretrain_mle(gparams: GeneratorParams, trainset: Sequence[Sequence[int]], epochs: int,
                 batch_size: int, lr: float, mode: str, rng: RngStream,
                 clip_norm: Optional[float] = None,
                 on_epoch: Optional[Callable[[int, float, GeneratorParams], Optional[bool]]] = None):
    """Teacher-forced MLE with Adam. Returns (params, per-epoch mean loss).

    ``on_epoch(epoch, loss, params)`` runs after every epoch; returning True
    stops training early.
    """
    if len(trainset) == 0:
        raise ValueError("empty training set")
    state = AdamState.zeros(gparams.arrays)
    arrays = gparams.arrays
    losses = []
    n = len(trainset)
    for epoch in range(epochs):
        order = rng.child("epoch", epoch).generator().permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, batch_size):
            batch = [trainset[i] for i in order[start:start + batch_size]]
            loss, grads = mle_loss_and_grad(gparams.replace(arrays), batch, mode)
            grads = clip_by_global_norm(scale_store(grads, -1.0), clip_norm)
            arrays, state = adam_step(arrays, grads, state, lr)
            total += loss * len(batch)
            count += len(batch)
        losses.append(total / count)
        log.debug("pretrain epoch %d loss %.4f", epoch, losses[-1])
        if on_epoch is not None and on_epoch(epoch, losses[-1], gparams.replace(arrays)):
            break
    return gparams.replace(arrays), losses


def draw_real_batch(trainset: Sequence[Sequence[int]], n: int, rng: RngStream):
    gen = rng.generator()
    idx = gen.choice(len(trainset), size=n, replace=len(trainset) < n)
    return [list(trainset[i]) for i in idx]


def r_step(gparams, rparams, state, trainset, config: TrainConfig, rng: RngStream):
    real = draw_real_batch(trainset, config.N, rng.child("real"))
    gen = sample_batch(gparams, config.M, config.max_len, config.mode, rng.child("gen"))
    grads, diag = r_step_grad(rparams, real, gen, rng.child("dropout"), train_mode=True)
    grads = clip_by_global_norm(grads, config.clip_norm)
    arrays, state = adam_step(rparams.arrays, grads, state, config.alpha)
    return rparams.replace(arrays), state, diag


def g_step(gparams, rparams, state, config: TrainConfig, rng: RngStream):
    trajs = sample_batch(gparams, config.M, config.max_len, config.mode, rng.child("gen"))
    returns = estimate_returns_batch(gparams, rparams, trajs, config.K, rng.child("rollout"),
                                     config.mode, config.max_len, config.threads)
    grads = g_step_grad(gparams, trajs, returns, config.mode, config.baseline)
    grads = clip_by_global_norm(grads, config.clip_norm)
    arrays, state = adam_step(gparams.arrays, grads, state, config.beta)
    R = batch_trajectory_rewards(rparams, [t.tokens for t in trajs])
    logq = np.array([t.total_logp for t in trajs])
    diag = {"g_objective": float(np.mean(R - logq)), "entropy": float(np.mean(-logq))}
    return gparams.replace(arrays), state, diag


def run_irl(gparams: GeneratorParams, rparams: RewardParams, trainset: Sequence[Sequence[int]],
            config: TrainConfig, oracle=None, log_path: Optional[str] = None,
            on_iteration: Optional[Callable] = None, log_wall_time: bool = False):
    """MLE pretraining followed by ``total_iterations`` rounds of r-steps and g-steps.

    ``on_iteration(iteration, gparams, rparams, record)`` is called after each
    round. Raises :class:`TrainingDiverged` as soon as a parameter or
    diagnostic turns non-finite.
    """
    from .oracle import nll_oracle

    if len(trainset) == 0:
        raise ValueError("empty training set")
    report = TrainReport()
    rng = RngStream(config.seed)
    if config.pretrain_epochs > 0:
        gparams, _ = pretrain_mle(gparams, trainset, config.pretrain_epochs,
                                  config.pretrain_batch or config.N, config.pretrain_lr or config.beta,
                                  config.mode, rng.child("pretrain"), config.clip_norm)
    sink = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        g_state = AdamState.zeros(gparams.arrays)
        r_state = AdamState.zeros(rparams.arrays)
        for it in range(config.total_iterations):
            t0 = time.perf_counter()
            irng = rng.child("iter", it)
            r_diags = []
            for e in range(config.n_r):
                rparams, r_state, d = r_step(gparams, rparams, r_state, trainset, config,
                                             irng.child("r", e))
                r_diags.append(d)
            g_diags = []
            for g in range(config.n_g):
                gparams, g_state, d = g_step(gparams, rparams, g_state, config, irng.child("g", g))
                g_diags.append(d)
            nll = None
            if oracle is not None:
                samples = sample_batch(gparams, config.eval_samples, config.max_len, config.mode,
                                       irng.child("eval"))
                nll = nll_oracle(oracle, [t.tokens for t in samples])
            record = IterationRecord(
                iteration=it,
                g_objective=float(np.mean([d["g_objective"] for d in g_diags])),
                mean_real_reward=float(np.mean([d["mean_real_reward"] for d in r_diags])),
                mean_gen_reward=float(np.mean([d["weighted_gen_reward"] for d in r_diags])),
                entropy=float(np.mean([d["entropy"] for d in g_diags])),
                ess=float(np.mean([d["ess"] for d in r_diags])),
                nll_oracle=nll,
                wall_time=time.perf_counter() - t0,
            )
            if not all_finite(gparams.arrays):
                raise TrainingDiverged(record, "generator parameters")
            if not all_finite(rparams.arrays):
                raise TrainingDiverged(record, "reward parameters")
            values = [record.g_objective, record.mean_real_reward, record.mean_gen_reward,
                      record.entropy, record.ess]
            if not all(math.isfinite(v) for v in values):
                raise TrainingDiverged(record, "diagnostics")
            report.records.append(record)
            if sink is not None:
                sink.write(record.to_json(log_wall_time) + "\n")
                sink.flush()
            if on_iteration is not None:
                on_iteration(it, gparams, rparams, record)
            log.info("iter %d objective %.4f entropy %.4f nll %s", it, record.g_objective,
                     record.entropy, nll)
    finally:
        if sink is not None:
            sink.close()
    return gparams, rparams, report
