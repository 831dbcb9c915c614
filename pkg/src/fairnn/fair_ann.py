"""Fair near-neighbor sampling on top of an :class:`~fairnn.lsh.LshIndex`.

Two query modes are offered.

*Approximate neighborhood* (:func:`fann_approx_query`): the query's ``t * L``
buckets form a sub-collection; points farther than ``c * r`` are treated
as outliers and the outlier-aware union sampler draws a near-uniform point
of what remains.

*Exact neighborhood* (:class:`QuerySession`): bucket weights ``z`` start at
the bucket sizes and drop by one per discovered outlier.  A structure
whose running outlier count reaches ``3 L`` is retired and all its weights
are zeroed.  :func:`fann_exact_sample` returns near-uniform points of the
surviving buckets within ``c * r``; :func:`fann_fair_query` keeps only those
within ``r``.

Concurrency: the index itself is read-only, but a session deactivates
outliers inside the buckets it shares with the index.  A session therefore
needs exclusive use of the index for its lifetime and must be closed (or
used as a context manager) to put the buckets back.  Run concurrent
queries against separate index replicas or serialise them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .collections import WeightedIndex
from .errors import (
    AllStructuresRetired,
    EmptyNeighborhood,
    EmptyUnion,
    RoundBudgetExhausted,
    UsageError,
)
from .lsh import LshIndex, LshParams, build_index
from .rng import RandomStream
from .union_sampler import SubCollection, UrnConfig, sample_union_outliers


class Mode(str, enum.Enum):
    APPROXIMATE = "approximate-neighborhood"
    EXACT = "exact-neighborhood"


@dataclass(frozen=True)
class FairSample:
    point: int
    distance: float
    mode: Mode
    rounds: int
    probes: int
    outliers_removed: int


class FairAnnIndex:
    """An LSH index plus the radius, approximation factor and accuracy used at query time."""

    def __init__(self, lsh: LshIndex, eps: float = 0.1) -> None:
        if not 0.0 < eps < 1.0:
            raise UsageError(f"eps must lie in (0, 1), got {eps}")
        self.lsh = lsh
        self.eps = eps

    @classmethod
    def build(cls, points, params: LshParams, eps: float = 0.1) -> FairAnnIndex:
        return cls(build_index(points, params), eps)

    @property
    def params(self) -> LshParams:
        return self.lsh.params

    @property
    def r(self) -> float:
        return self.lsh.params.r

    @property
    def cr(self) -> float:
        return self.lsh.params.c * self.lsh.params.r

    def distance(self, p: int, q: np.ndarray) -> float:
        d = self.lsh.points[p] - q
        return math.sqrt(float(d @ d))


def _query_point(index: FairAnnIndex, q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (index.params.dim,):
        raise UsageError(f"query must have shape ({index.params.dim},), got {q.shape}")
    return q


def fann_approx_query(index: FairAnnIndex, q, rng: RandomStream, eps: float | None = None,
                      max_outliers: int | None = None,
                      max_rounds: int | None = None) -> FairSample:
    """Near-uniform point of ``S``, where ``N(q, r) <= S <= N(q, cr)`` is fixed by the buckets.

    ``max_outliers`` defaults to ``4 t L``.  Raises
    :class:`~fairnn.errors.TooManyOutliers` when the buckets hold more far
    points than that (retrying with a fresh index seed is the usual remedy)
    and :class:`EmptyNeighborhood` when no bucket holds a point within ``cr``.
    """
    q = _query_point(index, q)
    eps = index.eps if eps is None else eps
    p = index.params
    if max_outliers is None:
        max_outliers = 4 * p.t * p.L
    sub = SubCollection(index.lsh.store, [b.handle for b in index.lsh.query_buckets(q)])
    if sub.total_size == 0:
        raise EmptyNeighborhood("every query bucket is empty")
    cr = index.cr
    cache: dict[int, float] = {}

    def dist(x: int) -> float:
        d = cache.get(x)
        if d is None:
            d = cache[x] = index.distance(x, q)
        return d

    try:
        rep = sample_union_outliers(sub, lambda x: dist(x) > cr, max_outliers, eps, rng,
                                    max_rounds)
    except EmptyUnion:
        raise EmptyNeighborhood("no point within c*r shares a bucket with the query") from None
    return FairSample(rep.element, dist(rep.element), Mode.APPROXIMATE, rep.rounds,
                      rep.probes, rep.outliers_removed)


class QuerySession:
    """Per-query state for exact-neighborhood sampling.

    ``z[j, i]`` is the active size of bucket ``i`` of structure ``j``;
    ``outliers[j][i]`` the far points found in it so far.  ``active`` lists
    the structures still in play, in increasing order.
    """

    def __init__(self, index: FairAnnIndex, q) -> None:
        self.index = index
        self.q = _query_point(index, q)
        p = index.params
        self.t, self.L = p.t, p.L
        refs = index.lsh.query_buckets(self.q)
        self.handles = np.array([b.handle for b in refs], dtype=np.int64).reshape(self.t, self.L)
        store = index.lsh.store
        self.sizes = np.array([store.active_count(h) for h in self.handles.reshape(-1)],
                              dtype=np.int64).reshape(self.t, self.L)
        self.z = self.sizes.copy()
        self.outliers: list[list[set[int]]] = [[set() for _ in range(self.L)]
                                               for _ in range(self.t)]
        self.outlier_counts = [0] * self.t
        self.active = list(range(self.t))
        self.weights = WeightedIndex(self.z.reshape(-1).tolist())
        # delta = eps / (4 t L), fixed for the session
        self.urn = UrnConfig.for_union(self.t * self.L, index.eps)
        self._dist: dict[int, float] = {}
        self._closed = False

    def __enter__(self) -> QuerySession:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def retire_threshold(self) -> int:
        return 3 * self.L

    @property
    def total_weight(self) -> float:
        return self.weights.total

    def distance(self, x: int) -> float:
        d = self._dist.get(x)
        if d is None:
            d = self._dist[x] = self.index.distance(x, self.q)
        return d

    def _retire(self, j: int) -> None:
        self.active.remove(j)
        for i in range(self.L):
            self.z[j, i] = 0
            self.weights.update(j * self.L + i, 0.0)

    def _record_outlier(self, j: int, i: int, x: int) -> None:
        self.outliers[j][i].add(x)
        self.index.lsh.store.deactivate(int(self.handles[j, i]), x)
        self.z[j, i] -= 1
        self.weights.update(j * self.L + i, float(self.z[j, i]))
        self.outlier_counts[j] += 1
        if self.outlier_counts[j] >= self.retire_threshold:
            self._retire(j)

    def close(self) -> None:
        """Reactivate every outlier this session deactivated."""
        if self._closed:
            return
        store = self.index.lsh.store
        for j in range(self.t):
            for i in range(self.L):
                if self.outliers[j][i]:
                    h = int(self.handles[j, i])
                    store.restore(h, store.active_count(h) + len(self.outliers[j][i]))
        self._closed = True

    def default_max_rounds(self) -> int:
        n = len(self.index.lsh)
        return math.ceil(64 * self.urn.backoff * self.t * self.L * math.log2(n + 2))


def session_init(index: FairAnnIndex, q) -> QuerySession:
    return QuerySession(index, q)


def _exact_round(session: QuerySession, rng: RandomStream):
    # one rejection round; returns (point or None, probes, outlier found)
    if session._closed:
        raise UsageError("session is closed")
    weights = session.weights
    if weights.total <= 0.0:
        if not session.active:
            raise AllStructuresRetired("every structure crossed the outlier threshold")
        raise EmptyNeighborhood("no active bucket holds a point within c*r")
    L = session.L
    b = weights.sample(rng)
    j, i = divmod(b, L)
    store = session.index.lsh.store
    h = int(session.handles[j, i])
    x = store._members[h][rng.below(store._active[h])]
    if session.distance(x) > session.index.cr:
        session._record_outlier(j, i, x)
        return None, 0, True
    # urn probes over the buckets of the active structures
    active = session.active
    m = len(active) * L
    limit = m * session.urn.backoff
    handles = session.handles
    pos, act = store._pos, store._active
    k = 0
    while k < limit:
        k += 1
        u = rng.below(m)
        hh = int(handles[active[u // L], u % L])
        p = pos[hh].get(x)
        if p is not None and p < act[hh]:
            return (x if rng.random() * limit < k else None), k, False
    return None, k, False


def fann_exact_sample(session: QuerySession, rng: RandomStream,
                      max_rounds: int | None = None) -> FairSample:
    """Near-uniform point of the active buckets within ``c * r`` of the query.

    Points within ``r`` are equally likely up to ``1 + O(eps)`` factors;
    points in the annulus are at most as likely; nothing beyond ``c * r`` is
    ever returned.  Outliers found along the way stay removed for the rest
    of the session.
    """
    if max_rounds is None:
        max_rounds = session.default_max_rounds()
    probes = found = 0
    for rounds in range(1, max_rounds + 1):
        x, used, outlier = _exact_round(session, rng)
        probes += used
        found += outlier
        if x is not None:
            return FairSample(x, session.distance(x), Mode.APPROXIMATE, rounds, probes, found)
    raise RoundBudgetExhausted(max_rounds)


def fann_fair_query(session: QuerySession, rng: RandomStream,
                    max_rounds: int | None = None) -> FairSample:
    """Near-uniform point of ``N(q, r)``.

    Repeats :func:`fann_exact_sample` and discards annulus points.  The
    round budget is shared across repeats; running out of it is reported as
    :class:`EmptyNeighborhood`, since no point within ``r`` was reached.
    """
    if max_rounds is None:
        max_rounds = session.default_max_rounds()
    r = session.index.r
    rounds = probes = found = 0
    while rounds < max_rounds:
        try:
            s = fann_exact_sample(session, rng, max_rounds - rounds)
        except RoundBudgetExhausted:
            break
        rounds += s.rounds
        probes += s.probes
        found += s.outliers_removed
        if s.distance <= r:
            return FairSample(s.point, s.distance, Mode.EXACT, rounds, probes, found)
    raise EmptyNeighborhood(f"no point within r accepted in {max_rounds} rounds")
