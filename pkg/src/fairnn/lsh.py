"""Euclidean LSH over randomly shifted one-dimensional grids.

A unit hash projects a point on a Gaussian direction, adds a shift drawn
uniformly from ``[0, w)`` and returns the index of the width-``w`` grid cell
it lands in.  A table key concatenates ``k`` unit hashes.  An index holds
``t`` independent structures of ``L`` tables each; every bucket is stored as
a set of a shared :class:`~fairnn.collections.SetStore`.

Hash parameters come from a counter-based stream: unit hash ``u`` of table
``i`` in structure ``j`` draws its direction and then its shift from
``Generator(Philox(SeedSequence([seed, j, i, u])))``.  Equal seeds therefore
give equal indexes on every platform numpy supports, independently of the
order in which tables are built.

The index is immutable once built, except for the transient deactivations
performed inside a fair-query session (see :mod:`fairnn.fair_ann`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .collections import SetStore
from .errors import DataFormatError, UsageError

# Parameter presets tuned for the three benchmark corpora (k=15, L=100).
PRESETS: dict[str, dict[str, float]] = {
    "mnist": {"r": 5.0, "w": 3.1, "k": 15, "L": 100},
    "sift": {"r": 255.0, "w": 4.0, "k": 15, "L": 100},
    "glove": {"r": 0.9, "w": 3.3, "k": 15, "L": 100},
}


@dataclass(frozen=True)
class LshParams:
    dim: int
    k: int
    L: int
    w: float
    r: float
    c: float = 2.0
    t: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise UsageError("dim must be positive")
        if self.k < 1 or self.L < 1 or self.t < 1:
            raise UsageError("k, L and t must be at least 1")
        if not (self.w > 0 and self.r > 0):
            raise UsageError("w and r must be positive")
        if not self.c > 1:
            raise UsageError("c must exceed 1")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class UnitHash:
    direction: np.ndarray
    shift: float


def unit_stream(seed: int, j: int, i: int, u: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, j, i, u])))


def draw_unit_hash(dim: int, w: float, seed: int, j: int, i: int, u: int) -> UnitHash:
    g = unit_stream(seed, j, i, u)
    direction = g.standard_normal(dim)
    shift = float(g.uniform(0.0, w))
    return UnitHash(direction, shift)


def _check_dim(x: np.ndarray, dim: int) -> None:
    if x.ndim != 1 or x.shape[0] != dim:
        raise UsageError(f"expected a point of dimension {dim}, got shape {x.shape}")


def unit_hash_eval(h: UnitHash, x, w: float) -> int:
    """Grid cell ``floor((<direction, x> + shift) / w)``."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(x, h.direction.shape[0])
    return math.floor((float(h.direction @ x) + h.shift) / w)


def concat_hash_eval(g, x, w: float) -> tuple[int, ...]:
    return tuple(unit_hash_eval(h, x, w) for h in g)


def dist_l2(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise UsageError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return float(np.linalg.norm(p - q))


class BucketRef(NamedTuple):
    structure: int
    table: int
    handle: int


class LshIndex:
    """``t x L`` hash tables over a fixed point set.

    ``directions[j, i]`` is the ``(k, dim)`` projection matrix of table
    ``(j, i)`` and ``shifts[j, i]`` its ``k`` shifts.  ``tables[j][i]`` maps a
    key tuple to a set handle in ``store``.  ``empty_handle`` names a shared
    empty set returned for keys that no point hashes to.
    """

    def __init__(self, points, params: LshParams) -> None:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] == 0:
            raise DataFormatError("points must be a non-empty 2-d array")
        if points.shape[1] != params.dim:
            raise UsageError(f"points have dimension {points.shape[1]}, params say {params.dim}")
        if not np.isfinite(points).all():
            raise DataFormatError("points contain non-finite entries")
        self.params = params
        self.points = points
        t, L, k, dim = params.t, params.L, params.k, params.dim
        self.directions = np.empty((t, L, k, dim))
        self.shifts = np.empty((t, L, k))
        for j in range(t):
            for i in range(L):
                for u in range(k):
                    h = draw_unit_hash(dim, params.w, params.seed, j, i, u)
                    self.directions[j, i, u] = h.direction
                    self.shifts[j, i, u] = h.shift

        buckets: list[list[int]] = [[]]  # handle 0 is the shared empty bucket
        self.empty_handle = 0
        self.tables: list[list[dict[tuple[int, ...], int]]] = []
        for j in range(t):
            keys = self._keys(points, j)
            row = []
            for i in range(L):
                uniq, inverse = np.unique(keys[:, i], axis=0, return_inverse=True)
                inverse = inverse.reshape(-1)
                order = np.argsort(inverse, kind="stable")
                bounds = np.searchsorted(inverse[order], np.arange(uniq.shape[0] + 1))
                table = {}
                for b in range(uniq.shape[0]):
                    table[tuple(uniq[b].tolist())] = len(buckets)
                    buckets.append(order[bounds[b]:bounds[b + 1]].tolist())
                row.append(table)
            self.tables.append(row)
        self.store = SetStore(buckets)

    def __len__(self) -> int:
        return self.points.shape[0]

    def _keys(self, pts: np.ndarray, j: int) -> np.ndarray:
        # build and query both go through here so equal points get equal keys
        p = self.params
        flat = self.directions[j].reshape(p.L * p.k, p.dim)
        proj = pts @ flat.T + self.shifts[j].reshape(-1)
        return np.floor(proj / p.w).astype(np.int64).reshape(pts.shape[0], p.L, p.k)

    def unit_hash(self, j: int, i: int, u: int) -> UnitHash:
        return UnitHash(self.directions[j, i, u], float(self.shifts[j, i, u]))

    def key(self, q, j: int, i: int) -> tuple[int, ...]:
        q = np.asarray(q, dtype=np.float64)
        _check_dim(q, self.params.dim)
        return tuple(self._keys(q[None, :], j)[0, i].tolist())

    def query_buckets(self, q) -> list[BucketRef]:
        """The bucket of ``q`` in every table, in ``(structure, table)`` order.

        Tables where no stored point shares ``q``'s key yield the empty
        bucket, so the result always has ``t * L`` entries.
        """
        q = np.asarray(q, dtype=np.float64)
        _check_dim(q, self.params.dim)
        out = []
        for j, row in enumerate(self.tables):
            keys = self._keys(q[None, :], j)[0]
            for i, table in enumerate(row):
                out.append(BucketRef(j, i, table.get(tuple(keys[i].tolist()), self.empty_handle)))
        return out


def build_index(points, params: LshParams) -> LshIndex:
    return LshIndex(points, params)
