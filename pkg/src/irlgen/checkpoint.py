"""Binary checkpoints.

Layout: 8-byte magic ``IRLTGCK1``; a little-endian uint64 header length;
the UTF-8 JSON header ``{version, kind, dims, arrays: [{name, rows, cols}]}``
with arrays in sorted-name order; then each array's row-major little-endian
float64 payload in header order. Saving the same parameters twice yields
identical bytes.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict

import numpy as np

MAGIC = b"IRLTGCK1"
VERSION = 1
KINDS = ("generator", "reward", "oracle")


class CheckpointError(Exception):
    kind = "checkpoint_error"


class BadMagicError(CheckpointError):
    kind = "bad_magic"


class TruncatedCheckpointError(CheckpointError):
    kind = "truncated"


class VersionMismatchError(CheckpointError):
    kind = "version_mismatch"


class ShapeMismatchError(CheckpointError):
    kind = "shape_mismatch"


@dataclass
class Checkpoint:
    kind: str
    dims: dict
    arrays: Dict[str, np.ndarray]
    version: int = VERSION


def to_bytes(kind: str, dims: dict, arrays: Dict[str, np.ndarray]) -> bytes:
    if kind not in KINDS:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    names = sorted(arrays)
    mats = []
    for name in names:
        a = np.asarray(arrays[name], dtype="<f8")
        if a.ndim != 2:
            raise ValueError(f"array {name!r} must be 2-D")
        mats.append(a)
    header = {
        "version": VERSION,
        "kind": kind,
        "dims": dims,
        "arrays": [{"name": n, "rows": int(a.shape[0]), "cols": int(a.shape[1])}
                   for n, a in zip(names, mats)],
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<Q", len(hbytes)), hbytes]
    parts.extend(np.ascontiguousarray(a).tobytes(order="C") for a in mats)
    return b"".join(parts)


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < len(MAGIC):
        raise TruncatedCheckpointError("file shorter than the magic number")
    if data[:8] != MAGIC:
        raise BadMagicError("bad magic")
    if len(data) < 16:
        raise TruncatedCheckpointError("missing header length")
    (hlen,) = struct.unpack("<Q", data[8:16])
    if len(data) < 16 + hlen:
        raise TruncatedCheckpointError("truncated header")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header: {exc}") from None
    if header.get("version") != VERSION:
        raise VersionMismatchError(f"checkpoint version {header.get('version')}, expected {VERSION}")
    offset = 16 + hlen
    arrays = {}
    for spec in header["arrays"]:
        n = int(spec["rows"]) * int(spec["cols"])
        end = offset + 8 * n
        if end > len(data):
            raise TruncatedCheckpointError(f"payload for {spec['name']!r} is truncated")
        arr = np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64)
        arrays[spec["name"]] = arr.reshape(int(spec["rows"]), int(spec["cols"]))
        offset = end
    if offset != len(data):
        raise ShapeMismatchError(f"{len(data) - offset} trailing bytes after the declared arrays")
    return Checkpoint(kind=header["kind"], dims=header["dims"], arrays=arrays, version=VERSION)


def save_checkpoint(path, kind: str, dims: dict, arrays: Dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(to_bytes(kind, dims, arrays))


def load_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# model helpers


def save_generator(path, params) -> None:
    save_checkpoint(path, "generator", params.dims.as_dict(), params.arrays)


def save_reward(path, params) -> None:
    dims = dict(params.dims.as_dict(), keep_prob=params.keep_prob)
    save_checkpoint(path, "reward", dims, params.arrays)


def save_oracle(path, oracle) -> None:
    dims = dict(oracle.params.dims.as_dict(), seed=oracle.seed)
    save_checkpoint(path, "oracle", dims, oracle.params.arrays)


def _expect_kind(ck: Checkpoint, *kinds: str) -> None:
    if ck.kind not in kinds:
        raise CheckpointError(f"expected a {' or '.join(kinds)} checkpoint, got {ck.kind!r}")


def load_generator(path):
    """Generator parameters from a generator or oracle checkpoint."""
    from .policy import GenDims, GeneratorParams

    ck = load_checkpoint(path)
    _expect_kind(ck, "generator", "oracle")
    dims = GenDims(ck.dims["vocab_size"], ck.dims["emb_dim"], ck.dims["hid_dim"])
    try:
        return GeneratorParams(dims, ck.arrays)
    except ValueError as exc:
        raise ShapeMismatchError(str(exc)) from None


def load_reward(path):
    from .reward import RewardDims, RewardParams

    ck = load_checkpoint(path)
    _expect_kind(ck, "reward")
    d = ck.dims
    dims = RewardDims(d["vocab_size"], d["emb_dim"], d["hid_dim"], d["mlp_dim"])
    try:
        return RewardParams(dims, ck.arrays, d.get("keep_prob", 0.75))
    except ValueError as exc:
        raise ShapeMismatchError(str(exc)) from None


def load_oracle(path):
    from .oracle import oracle_from_params

    ck = load_checkpoint(path)
    _expect_kind(ck, "oracle")
    return oracle_from_params(load_generator(path), int(ck.dims.get("seed", -1)))
