"""Synthetic-oracle benchmark: a frozen random LSTM that produces training data
and scores generated sequences by per-token negative log-likelihood."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from . import lstm
from .numerics import RngStream
from .policy import GenDims, GeneratorParams, pad_batch, sample_batch, teacher_forced, validate_tokens

MODE = "fixed-length"


@dataclass(frozen=True)
class OracleModel:
    params: GeneratorParams
    seed: int

    @property
    def n_content(self) -> int:
        return self.params.dims.n_content


def _freeze(params: GeneratorParams) -> GeneratorParams:
    for arr in params.arrays.values():
        arr.setflags(write=False)
    return params


def make_oracle(seed: int, n_content: int, emb_dim: int, hid_dim: int) -> OracleModel:
    """Oracle with every weight drawn i.i.d. from N(0, 1)."""
    dims = GenDims(n_content + 2, emb_dim, hid_dim)
    gen = RngStream(seed, ("oracle",)).generator()
    V, E, H = dims.vocab_size, dims.emb_dim, dims.hid_dim
    arrays = {"embed": gen.standard_normal((V, E))}
    for g in lstm.GATES:
        arrays[f"W_{g}"] = gen.standard_normal((E + H, H))
        arrays[f"b_{g}"] = gen.standard_normal((1, H))
    arrays["out_W"] = gen.standard_normal((H, V))
    arrays["out_b"] = gen.standard_normal((1, V))
    return OracleModel(_freeze(GeneratorParams(dims, arrays)), seed)


def oracle_from_params(params: GeneratorParams, seed: int = -1) -> OracleModel:
    arrays = {k: np.array(v, copy=True) for k, v in params.arrays.items()}
    return OracleModel(_freeze(GeneratorParams(params.dims, arrays)), seed)


def generate_dataset(oracle: OracleModel, n: int, T: int, rng: RngStream) -> List[List[int]]:
    if n == 0:
        return []
    return [t.tokens for t in sample_batch(oracle.params, n, T, MODE, rng)]


def per_sequence_logp(oracle: OracleModel, samples: Sequence[Sequence[int]]) -> np.ndarray:
    tokens, _ = pad_batch(samples)
    step_lp, _ = teacher_forced(oracle.params, tokens, MODE)
    return step_lp.sum(axis=1)


def nll_oracle(oracle: OracleModel, samples: Sequence[Sequence[int]], chunk: int = 2000) -> float:
    """Mean per-token negative log-likelihood under the oracle.

    All samples must share one length; the average is over n * T tokens.
    """
    if len(samples) == 0:
        raise ValueError("no samples to score")
    T = len(samples[0])
    if T == 0:
        raise ValueError("samples must be non-empty sequences")
    for i, s in enumerate(samples):
        if len(s) != T:
            raise ValueError(f"sample {i} has length {len(s)}, expected {T}")
        validate_tokens(s, oracle.params.dims.vocab_size, MODE)
    total = 0.0
    for start in range(0, len(samples), chunk):
        total += float(per_sequence_logp(oracle, samples[start:start + chunk]).sum())
    return -total / (len(samples) * T)
