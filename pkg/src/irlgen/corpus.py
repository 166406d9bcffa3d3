"""Vocabulary building, frequency filtering, id encoding and token files."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from .numerics import RngStream
from .policy import BOS, EOS, N_RESERVED, check_mode

BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class EmptyCorpusError(ValueError):
    pass


class TokenFileError(ValueError):
    pass


def tokenize(text: str) -> List[str]:
    """Lowercase; words and single punctuation marks become separate tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocab:
    itos: List[str]
    min_freq: int = 1
    counts: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.itos[:N_RESERVED] != [BOS_TOKEN, EOS_TOKEN]:
            raise ValueError("vocab must start with the reserved BOS and EOS symbols")
        if len(set(self.itos)) != len(self.itos):
            raise ValueError("duplicate vocabulary entries")
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    @property
    def n_content(self) -> int:
        return len(self.itos) - N_RESERVED


def _length_ok(sent, min_len, max_len) -> bool:
    return min_len <= len(sent) <= max_len


def build_vocab_and_filter(texts: Sequence[Sequence[str]], min_freq: int = 1, min_len: int = 1,
                           max_len: int = 10**9) -> Tuple[Vocab, List[List[str]]]:
    """Length-filter sentences, then drop rare tokens and every sentence using one.

    Dropping sentences can push other tokens below ``min_freq``; the pass is
    repeated until nothing changes, so the result is a fixed point.
    """
    kept = [list(s) for s in texts if _length_ok(s, min_len, max_len)]
    while True:
        counts = Counter(tok for s in kept for tok in s)
        rare = {tok for tok, c in counts.items() if c < min_freq}
        if not rare:
            break
        kept = [s for s in kept if not rare.intersection(s)]
    if not kept:
        raise EmptyCorpusError("no sentences survive filtering")
    for s in kept:
        for tok in s:
            if tok in (BOS_TOKEN, EOS_TOKEN):
                raise ValueError(f"reserved symbol {tok!r} found in the corpus")
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    vocab = Vocab([BOS_TOKEN, EOS_TOKEN] + ordered, min_freq=min_freq, counts=dict(counts))
    return vocab, kept


def encode(vocab: Vocab, sentence: Sequence[str]) -> List[int]:
    ids = []
    for tok in sentence:
        i = vocab.stoi.get(tok)
        if i is None or i < N_RESERVED:
            raise ValueError(f"token {tok!r} is not in the vocabulary")
        ids.append(i)
    return ids


def decode(vocab: Vocab, ids: Sequence[int], mode: str = "eos-terminated") -> List[str]:
    """Map ids back to tokens. In eos-terminated mode BOS/EOS ids are dropped."""
    check_mode(mode)
    out = []
    for i in ids:
        if not (0 <= i < len(vocab)):
            raise ValueError(f"id {i} is out of range")
        if i in (BOS, EOS):
            if mode == "eos-terminated":
                continue
            raise ValueError(f"reserved id {i} in a fixed-length sequence")
        out.append(vocab.itos[i])
    return out


def with_eos(seqs: Sequence[Sequence[int]]) -> List[List[int]]:
    return [list(s) + [EOS] for s in seqs]


def split_train_test(items: Sequence, n_test: int, rng: RngStream):
    """Seeded shuffle, then the first ``n_test`` items become the test split."""
    if not (0 <= n_test <= len(items)):
        raise ValueError("n_test out of range")
    order = rng.generator().permutation(len(items))
    test = [items[i] for i in order[:n_test]]
    train = [items[i] for i in order[n_test:]]
    return train, test


# ---------------------------------------------------------------------------
# files


def write_token_file(path, sequences: Sequence[Sequence[int]]) -> None:
    lines = []
    for s in sequences:
        for t in s:
            if int(t) < 0:
                raise ValueError("token ids must be non-negative")
        lines.append(" ".join(str(int(t)) for t in s) + "\n")
    Path(path).write_text("".join(lines), encoding="ascii", newline="\n")


def read_token_file(path) -> List[List[int]]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line[:-1] if line.endswith("\n") else line
            fields = body.split(" ") if body else []
            if not all(f.isdigit() and f.isascii() for f in fields):
                raise TokenFileError(f"{path}: line {lineno}: malformed token line {body!r}")
            out.append([int(f) for f in fields])
    return out


def write_vocab(path, vocab: Vocab) -> None:
    Path(path).write_text("".join(tok + "\n" for tok in vocab.itos), encoding="utf-8", newline="\n")


def read_vocab(path) -> Vocab:
    itos = Path(path).read_text(encoding="utf-8").split("\n")
    if itos and itos[-1] == "":
        itos.pop()
    return Vocab(itos)
