"""Sentence BLEU and the forward / backward / harmonic BLEU corpus measures.

Forward BLEU scores generated texts against the test set (quality); backward
BLEU scores test texts against the generated set (coverage). Both average
sentence-level scores over a seeded sample of hypotheses.

Conventions (recorded in every :class:`MetricsReport`):

* cumulative BLEU-n: geometric mean of clipped precisions for orders 1..n
  with uniform weights (``cumulative=False`` uses order n alone);
* orders longer than the hypothesis are dropped, so a hypothesis shorter
  than n is scored on the orders it has;
* a zero precision is replaced by ``eps`` (default 1e-9);
* brevity penalty uses the closest reference length, ties to the shorter.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Dict, Hashable, List, Sequence

import numpy as np

from .numerics import RngStream

EPS = 1e-9


def ngrams(seq: Sequence[Hashable], k: int) -> Counter:
    return Counter(tuple(seq[i:i + k]) for i in range(len(seq) - k + 1))


class References:
    """Max n-gram counts over a reference set, plus its sorted lengths."""

    def __init__(self, refs: Sequence[Sequence[Hashable]], max_order: int):
        if len(refs) == 0:
            raise ValueError("need at least one reference")
        self.max_order = max_order
        self.max_counts: List[Dict[tuple, int]] = []
        for k in range(1, max_order + 1):
            merged: Dict[tuple, int] = {}
            for ref in refs:
                for g, c in ngrams(ref, k).items():
                    if c > merged.get(g, 0):
                        merged[g] = c
            self.max_counts.append(merged)
        self.lengths = np.unique([len(r) for r in refs])

    def closest_length(self, c: int) -> int:
        i = int(np.searchsorted(self.lengths, c))
        cands = self.lengths[max(i - 1, 0):i + 1]
        return int(min(cands, key=lambda r: (abs(int(r) - c), int(r))))


def _score(hyp: Sequence[Hashable], refs: References, n: int, eps: float, cumulative: bool) -> float:
    c = len(hyp)
    orders = range(1, min(n, c) + 1) if cumulative else [n]
    logs = []
    for k in orders:
        counts = ngrams(hyp, k)
        total = sum(counts.values())
        table = refs.max_counts[k - 1]
        matched = sum(min(cnt, table.get(g, 0)) for g, cnt in counts.items())
        p = matched / total if total and matched else eps
        logs.append(math.log(p))
    r = refs.closest_length(c)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(sum(logs) / len(logs))


def sentence_bleu(hyp: Sequence[Hashable], refs, n: int = 4, eps: float = EPS,
                  cumulative: bool = True) -> float:
    if len(hyp) == 0:
        raise ValueError("empty hypothesis")
    if n < 1:
        raise ValueError("n must be >= 1")
    if not isinstance(refs, References):
        refs = References(refs, n)
    elif refs.max_order < n:
        raise ValueError("reference index built for a lower order")
    return _score(hyp, refs, n, eps, cumulative)


def sample_indices(n_items: int, size: int, rng: RngStream) -> np.ndarray:
    """All indices if ``n_items <= size``, else a seeded sample without replacement."""
    if n_items <= size:
        return np.arange(n_items)
    return rng.generator().choice(n_items, size=size, replace=False)


def _mean_bleu(hyps, refs, n, eps, cumulative) -> float:
    index = References(refs, n)
    return float(np.mean([_score(h, index, n, eps, cumulative) for h in hyps]))


def bleu_forward(generated, testset, n: int = 4, rng: RngStream | None = None, n_hyp: int = 1000,
                 eps: float = EPS, cumulative: bool = True) -> float:
    if len(generated) == 0 or len(testset) == 0:
        raise ValueError("bleu_forward needs non-empty generated and test sets")
    rng = rng or RngStream(0)
    hyps = [generated[i] for i in sample_indices(len(generated), n_hyp, rng.child("hyp"))]
    return _mean_bleu(hyps, testset, n, eps, cumulative)


def bleu_backward(generated, testset, n: int = 4, rng: RngStream | None = None, n_hyp: int = 1000,
                  n_ref: int = 5000, eps: float = EPS, cumulative: bool = True) -> float:
    if len(generated) == 0 or len(testset) == 0:
        raise ValueError("bleu_backward needs non-empty generated and test sets")
    rng = rng or RngStream(0)
    hyps = [testset[i] for i in sample_indices(len(testset), n_hyp, rng.child("hyp"))]
    refs = [generated[i] for i in sample_indices(len(generated), n_ref, rng.child("ref"))]
    return _mean_bleu(hyps, refs, n, eps, cumulative)


def bleu_ha(f: float, b: float) -> float:
    if f + b == 0:
        return 0.0
    return 2.0 * f * b / (f + b)


@dataclass
class MetricsReport:
    forward: Dict[int, float]
    backward: Dict[int, float]
    harmonic: Dict[int, float]
    n_generated: int
    n_test: int
    seed: int
    n_hyp: int = 1000
    n_ref: int = 5000
    eps: float = EPS
    cumulative: bool = True
    orders: List[int] = field(default_factory=list)

    def to_json(self) -> str:
        d = asdict(self)
        for key in ("forward", "backward", "harmonic"):
            d[key] = {str(k): v for k, v in d[key].items()}
        return json.dumps(d, sort_keys=True)


def evaluate_bleu(generated, testset, orders=(2, 3, 4, 5), seed: int = 0, n_hyp: int = 1000,
                  n_ref: int = 5000, eps: float = EPS, cumulative: bool = True) -> MetricsReport:
    rng = RngStream(seed, ("bleu",))
    fwd, bwd, ha = {}, {}, {}
    for n in orders:
        fwd[n] = bleu_forward(generated, testset, n, rng.child("forward"), n_hyp, eps, cumulative)
        bwd[n] = bleu_backward(generated, testset, n, rng.child("backward"), n_hyp, n_ref, eps,
                               cumulative)
        ha[n] = bleu_ha(fwd[n], bwd[n])
    return MetricsReport(forward=fwd, backward=bwd, harmonic=ha, n_generated=len(generated),
                         n_test=len(testset), seed=seed, n_hyp=n_hyp, n_ref=n_ref, eps=eps,
                         cumulative=cumulative, orders=list(orders))
