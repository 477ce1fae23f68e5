"""Locality-sensitive hash families.

Three families are supported:

* ``srp``  -- signed random projections, sign(w.x), for the angular kernel.
* ``l2``   -- p-stable Euclidean hashing, floor((w.x + b) / sigma) with
  Gaussian projections.
* ``l1``   -- p-stable Manhattan hashing with Cauchy projections.

Projections and offsets are never stored. Every component is a pure
function of (seed, row, concat, dim_index) computed through a counter-based
64-bit mixer, so a sketch is reproducible from its config alone and sparse
inputs hash in O(nnz * rows * power) without materializing any matrix.

The p-stable code tuples have unbounded range and are folded to a finite
slot range with a seeded universal-style hash ("rehashing"). The variant
implemented here is identified by :data:`REHASH_FAMILY_ID` and recorded in
serialized sketches, since merged sketches must agree on it bit-for-bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtri

from .vectors import DataVector, DimensionMismatchError

__all__ = [
    "Family",
    "LshConfig",
    "REHASH_FAMILY_ID",
    "projection_component",
    "projection_block",
    "offset_component",
    "offset_block",
    "srp_hash",
    "pstable_hash",
    "rehash",
    "hash_all",
    "hash_matrix",
    "hash_blocks",
    "slots_for_block",
    "derive_seed",
]


class Family(str, Enum):
    SRP = "srp"
    L2 = "l2"
    L1 = "l1"


# Identifier of the slot-rehashing variant (splitmix64 fold, modulo range).
REHASH_FAMILY_ID = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

_TAG_PROJ = np.uint64(0xA0761D6478BD642F)
_TAG_OFFSET = np.uint64(0xE7037ED1A0B428DB)
_TAG_REHASH = np.uint64(0x8EBC6AF09C88C6E3)

_U64_MASK = (1 << 64) - 1


def _fmix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorized over uint64 arrays (wrapping)."""
    z = np.array(z, dtype=np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def _hash_counter(base: np.uint64, counter: np.ndarray) -> np.ndarray:
    """Two-round mix of a counter stream against a seed-derived base."""
    z = np.array(counter, dtype=np.uint64, copy=True)
    z += _GOLDEN
    z = _fmix64(z)
    z ^= base
    return _fmix64(z)


def _base(seed: int, tag: np.uint64) -> np.uint64:
    s = np.uint64(int(seed) & _U64_MASK)
    return np.uint64(_fmix64(s ^ tag))


def _to_unit(bits: np.ndarray) -> np.ndarray:
    """Map 64-bit words to uniform doubles in the open interval (0, 1)."""
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def derive_seed(master: int, label: str, index: int = 0) -> int:
    """Derive an independent 64-bit seed from a master seed and a label."""
    key = (int(master) & _U64_MASK).to_bytes(8, "little")
    h = hashlib.blake2b(
        f"{label}:{index}".encode(), key=key, digest_size=8
    ).digest()
    return int.from_bytes(h, "little")


@dataclass(frozen=True)
class LshConfig:
    """Identity of a set of LSH functions.

    Two sketches can be merged only if their configs are identical:
    the config (plus the rehash family id) fully determines every hash.

    ``hash_range`` is the slot range of each row. For SRP it must equal
    2**power (the packed sign bits); for l2/l1 it is the rehash target.
    Slots are 0-based, in [0, hash_range).
    """

    kind: Family
    dim: int
    sigma: float
    power: int
    rows: int
    hash_range: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Family(self.kind))
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.power < 1:
            raise ValueError("power must be >= 1")
        if self.rows < 1:
            raise ValueError("rows must be >= 1")
        if self.kind is Family.SRP:
            if self.hash_range != 2**self.power:
                raise ValueError(
                    f"srp range must be 2**power = {2**self.power}, "
                    f"got {self.hash_range}"
                )
        else:
            if self.hash_range < 2:
                raise ValueError("rehash range must be >= 2")
            if not self.sigma > 0:
                raise ValueError("sigma must be positive for l2/l1")
        if not 0 <= int(self.seed) <= _U64_MASK:
            raise ValueError("seed must fit in 64 unsigned bits")


def projection_block(
    cfg: LshConfig,
    row_start: int,
    row_stop: int,
    dim_indices: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Projection components for rows [row_start, row_stop).

    Returns an array of shape ((row_stop - row_start) * power, k) where k
    is dim (or len(dim_indices) when given, for sparse inputs). Entries are
    standard Gaussian for srp/l2 and standard Cauchy for l1, and depend
    only on (seed, row, concat, dim_index).
    """
    p = cfg.power
    d = cfg.dim
    rows = np.arange(row_start, row_stop, dtype=np.uint64)
    concats = np.arange(p, dtype=np.uint64)
    if dim_indices is None:
        dims = np.arange(d, dtype=np.uint64)
    else:
        dims = np.asarray(dim_indices, dtype=np.uint64)
    counter = (
        (rows[:, None, None] * np.uint64(p) + concats[None, :, None])
        * np.uint64(d)
        + dims[None, None, :]
    )
    u = _to_unit(_hash_counter(_base(cfg.seed, _TAG_PROJ), counter.ravel()))
    if cfg.kind is Family.L1:
        vals = np.tan(np.pi * (u - 0.5))
    else:
        vals = ndtri(u)
    return vals.reshape((row_stop - row_start) * p, dims.size)


def projection_component(cfg: LshConfig, row: int, concat: int, dim_index: int) -> float:
    """Single projection-matrix entry w[row, concat, dim_index]."""
    if not (0 <= row < cfg.rows and 0 <= concat < cfg.power and 0 <= dim_index < cfg.dim):
        raise IndexError("projection component index out of range")
    block = projection_block(
        replace(cfg, rows=row + 1), row, row + 1, np.array([dim_index])
    )
    return float(block[concat, 0])


def offset_block(cfg: LshConfig, row_start: int, row_stop: int) -> np.ndarray:
    """p-stable offsets b in [0, sigma) for rows [row_start, row_stop).

    Shape ((row_stop - row_start) * power,), flattened row-major over
    (row, concat).
    """
    p = cfg.power
    rows = np.arange(row_start, row_stop, dtype=np.uint64)
    concats = np.arange(p, dtype=np.uint64)
    counter = (rows[:, None] * np.uint64(p) + concats[None, :]).ravel()
    u = _to_unit(_hash_counter(_base(cfg.seed, _TAG_OFFSET), counter))
    return u * cfg.sigma


def offset_component(cfg: LshConfig, row: int, concat: int) -> float:
    if not (0 <= row < cfg.rows and 0 <= concat < cfg.power):
        raise IndexError("offset component index out of range")
    return float(offset_block(cfg, row, row + 1)[concat])


def _rehash_fold(codes: np.ndarray, row_start: int, hash_range: int, seed: int) -> np.ndarray:
    """Fold integer code tuples into slots in [0, hash_range).

    ``codes`` has shape (n, rows, p) with signed integer entries; the
    result has shape (n, rows). Equal tuples in the same row always map to
    the same slot; distinct tuples collide with probability ~1/hash_range.
    """
    n, nrows, p = codes.shape
    rows = np.arange(row_start, row_start + nrows, dtype=np.uint64)
    state = np.broadcast_to(
        _hash_counter(_base(seed, _TAG_REHASH), rows)[None, :], (n, nrows)
    ).copy()
    for j in range(p):
        state = _fmix64(state ^ codes[:, :, j].astype(np.uint64))
    return state % np.uint64(hash_range)


def rehash_keys(cfg: LshConfig, row_start: int, row_stop: int) -> np.ndarray:
    """Per-row initial fold states for slot rehashing (uint64, one per row)."""
    rows = np.arange(row_start, row_stop, dtype=np.uint64)
    return _hash_counter(_base(cfg.seed, _TAG_REHASH), rows)


def rehash(code: Sequence[int], row: int, hash_range: int, seed: int) -> int:
    """Universal-style hash of one (row, code tuple) into [0, hash_range)."""
    if hash_range < 2:
        raise ValueError("hash_range must be >= 2")
    arr = np.asarray(code, dtype=np.int64).reshape(1, 1, -1)
    return int(_rehash_fold(arr, row, hash_range, seed)[0, 0])


def _pack_srp(bits: np.ndarray) -> np.ndarray:
    """Pack sign bits (n, rows, p) little-endian into slot codes (n, rows)."""
    p = bits.shape[2]
    weights = (np.uint64(1) << np.arange(p, dtype=np.uint64))
    return bits.astype(np.uint64) @ weights


def slots_for_block(
    cfg: LshConfig,
    X: np.ndarray,
    W: np.ndarray,
    b: Optional[np.ndarray],
    row_start: int,
) -> np.ndarray:
    """Slot indices for a block of rows against a dense point matrix.

    X is (n, dim); W, b are the outputs of projection_block / offset_block
    for rows [row_start, row_start + m). Returns uint64 slots (n, m).
    """
    n = X.shape[0]
    m = W.shape[0] // cfg.power
    proj = X @ W.T
    if cfg.kind is Family.SRP:
        bits = proj >= 0.0
        return _pack_srp(bits.reshape(n, m, cfg.power))
    codes = np.floor((proj + b) / cfg.sigma).astype(np.int64)
    return _rehash_fold(codes.reshape(n, m, cfg.power), row_start, cfg.hash_range, cfg.seed)


def _row_block_size(cfg: LshConfig, n_points: int) -> int:
    # Cap the projection block and the per-chunk slot matrix at a few
    # hundred MB regardless of dim/rows.
    by_matrix = max(1, int(4e6 / (cfg.power * cfg.dim)))
    by_points = max(1, int(4e7 / (max(n_points, 1) * cfg.power)))
    return max(1, min(cfg.rows, by_matrix, by_points))


def hash_blocks(
    cfg: LshConfig, n_points: int = 1
) -> Iterator[Tuple[int, int, np.ndarray, Optional[np.ndarray]]]:
    """Yield (row_start, row_stop, W, b) blocks covering all rows."""
    step = _row_block_size(cfg, n_points)
    for r0 in range(0, cfg.rows, step):
        r1 = min(cfg.rows, r0 + step)
        W = projection_block(cfg, r0, r1)
        b = None if cfg.kind is Family.SRP else offset_block(cfg, r0, r1)
        yield r0, r1, W, b


def hash_matrix(cfg: LshConfig, X: np.ndarray) -> np.ndarray:
    """Slot indices for every (point, row) pair; X is (n, dim) dense.

    Returns a uint64 array of shape (n, rows) with entries in
    [0, hash_range).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != cfg.dim:
        raise DimensionMismatchError(
            f"expected points of dimension {cfg.dim}, got shape {X.shape}"
        )
    out = np.empty((X.shape[0], cfg.rows), dtype=np.uint64)
    for r0, r1, W, b in hash_blocks(cfg, X.shape[0]):
        out[:, r0:r1] = slots_for_block(cfg, X, W, b, r0)
    return out


def _sparse_slots(cfg: LshConfig, x: DataVector) -> np.ndarray:
    """hash_all for a sparse vector without touching zero coordinates."""
    out = np.empty(cfg.rows, dtype=np.uint64)
    step = max(1, int(4e6 / max(cfg.power * max(x.values.size, 1), 1)))
    for r0 in range(0, cfg.rows, step):
        r1 = min(cfg.rows, r0 + step)
        W = projection_block(cfg, r0, r1, x.indices)
        proj = W @ x.values
        if cfg.kind is Family.SRP:
            bits = (proj >= 0.0).reshape(1, r1 - r0, cfg.power)
            out[r0:r1] = _pack_srp(bits)[0]
        else:
            b = offset_block(cfg, r0, r1)
            codes = np.floor((proj + b) / cfg.sigma).astype(np.int64)
            out[r0:r1] = _rehash_fold(
                codes.reshape(1, r1 - r0, cfg.power), r0, cfg.hash_range, cfg.seed
            )[0]
    return out


def hash_all(cfg: LshConfig, x: DataVector) -> np.ndarray:
    """Slot index of x for every row; uint64 array of shape (rows,)."""
    if x.dim != cfg.dim:
        raise DimensionMismatchError(f"expected dim {cfg.dim}, got {x.dim}")
    if x.is_sparse:
        return _sparse_slots(cfg, x)
    return hash_matrix(cfg, x.values[None, :])[0]


def srp_hash(cfg: LshConfig, x: DataVector, row: int) -> int:
    """Packed p-bit sign code of x for one row; bit j is sign(w_j . x) >= 0.

    Ties break as sign(0) := +1, so the zero vector maps to the all-ones
    code.
    """
    if cfg.kind is not Family.SRP:
        raise ValueError("srp_hash requires an srp config")
    if x.dim != cfg.dim:
        raise DimensionMismatchError(f"expected dim {cfg.dim}, got {x.dim}")
    if not 0 <= row < cfg.rows:
        raise IndexError("row out of range")
    if x.is_sparse:
        W = projection_block(cfg, row, row + 1, x.indices)
        proj = W @ x.values
    else:
        W = projection_block(cfg, row, row + 1)
        proj = W @ x.values
    bits = (proj >= 0.0).reshape(1, 1, cfg.power)
    return int(_pack_srp(bits)[0, 0])


def pstable_hash(cfg: LshConfig, x: DataVector, row: int) -> Tuple[int, ...]:
    """p-tuple of floor((w_j . x + b_j) / sigma) codes for one row."""
    if cfg.kind not in (Family.L2, Family.L1):
        raise ValueError("pstable_hash requires an l2 or l1 config")
    if x.dim != cfg.dim:
        raise DimensionMismatchError(f"expected dim {cfg.dim}, got {x.dim}")
    if not 0 <= row < cfg.rows:
        raise IndexError("row out of range")
    if x.is_sparse:
        W = projection_block(cfg, row, row + 1, x.indices)
    else:
        W = projection_block(cfg, row, row + 1)
    proj = W @ x.values
    b = offset_block(cfg, row, row + 1)
    codes = np.floor((proj + b) / cfg.sigma).astype(np.int64)
    return tuple(int(c) for c in codes)
