"""Uniform and near-uniform sampling from a union of stored sets.

All samplers share the same proposal: pick a set of the sub-collection
with probability proportional to its active size, then a uniform active
member ``x`` of it.  ``x`` is proposed with probability ``deg(x)/m``, so
accepting it with probability ``1/deg(x)`` makes every element of the union
equally likely.  The samplers differ in how they realise that acceptance:

* :func:`sample_union_exact` counts ``deg(x)`` with ``s`` membership tests;
* :func:`sample_union_approx` estimates it by sequential probing;
* :func:`sample_union_simulated` never computes it, and instead accepts with
  the probability produced by :func:`urn_probe_bit`;
* :func:`sample_union_outliers` is the simulated sampler plus on-the-fly
  deletion of marked outliers.

A :class:`SubCollection` is owned by one logical thread.  The outlier
sampler mutates the underlying :class:`~fairnn.collections.SetStore` while
it runs and rewinds it before returning, so two queries must not share a
store concurrently.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .collections import SetStore, WeightedIndex, estimate_subset_size
from .errors import (
    EmptyEstimate,
    EmptyUnion,
    RoundBudgetExhausted,
    TooManyOutliers,
    UsageError,
)
from .rng import RandomStream

UrnPredicate = Callable[[int], bool] | Sequence[bool]


class SubCollection:
    """A queried sub-family of a :class:`SetStore`.

    ``size_index`` holds the active size of every set and is kept in step
    with the store by the samplers that deactivate elements.
    """

    def __init__(self, store: SetStore, handles: Sequence[int]) -> None:
        self.store = store
        self.sets = [int(h) for h in handles]
        seen = set()
        for h in self.sets:
            if store.size(h) > 0:
                if h in seen:
                    raise UsageError(f"non-empty set {h} listed twice")
                seen.add(h)
        self.size_index = WeightedIndex([store.active_count(h) for h in self.sets])

    def __len__(self) -> int:
        return len(self.sets)

    @property
    def total_size(self) -> int:
        return int(self.size_index.total)

    def union(self) -> set[int]:
        """The union of active members, built by brute force."""
        out: set[int] = set()
        for h in self.sets:
            out.update(self.store.active_members(h))
        return out


@dataclass(frozen=True)
class UrnConfig:
    """Failure bound ``delta`` and the derived backoff ``ceil(ln(1/delta)) + 4``."""

    delta: float
    backoff: int = field(init=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise UsageError(f"delta must lie in (0, 1), got {self.delta}")
        # the epsilon keeps delta = e^-k from rounding up to k + 1
        object.__setattr__(self, "backoff", math.ceil(-math.log(self.delta) - 1e-9) + 4)

    @classmethod
    def for_union(cls, num_sets: int, eps: float) -> UrnConfig:
        """The configuration used by the simulated samplers: ``delta = eps / (4 s)``."""
        if not 0.0 < eps < 1.0:
            raise UsageError(f"eps must lie in (0, 1), got {eps}")
        return cls(eps / (4.0 * max(1, num_sets)))


@dataclass(frozen=True)
class SampleReport:
    element: int
    rounds: int
    probes: int
    outliers_removed: int = 0


def default_max_rounds(num_sets: int, total_size: int, backoff: int = 1) -> int:
    """Round cap ``64 * backoff * s * log2(m + 2)``; ``m`` bounds the union size."""
    return math.ceil(64 * backoff * max(1, num_sets) * math.log2(total_size + 2))


def _as_predicate(is_nonempty: UrnPredicate) -> Callable[[int], bool]:
    if callable(is_nonempty):
        return is_nonempty
    if not any(is_nonempty):
        raise UsageError("every urn is empty")
    return is_nonempty.__getitem__


def _first_hit(num_urns: int, probe: Callable[[int], bool], rng: RandomStream,
               limit: int | None) -> int:
    """1-based index of the first probe landing on a non-empty urn (0 if none by ``limit``)."""
    i = 0
    while limit is None or i < limit:
        i += 1
        if probe(rng.below(num_urns)):
            return i
    return 0


def urn_probe_value(num_urns: int, is_nonempty: UrnPredicate, rng: RandomStream) -> float:
    """Unbiased estimate of ``1/g`` for ``g`` non-empty urns out of ``num_urns``.

    Probes urns uniformly with replacement; if the first non-empty one
    shows up on probe ``i`` the result is ``i / num_urns``.  The caller must
    guarantee ``g >= 1``.
    """
    if num_urns < 1:
        raise UsageError("need at least one urn")
    i = _first_hit(num_urns, _as_predicate(is_nonempty), rng, None)
    return i / num_urns


def urn_probe_bit(num_urns: int, is_nonempty: UrnPredicate, cfg: UrnConfig,
                  rng: RandomStream) -> int:
    """Bernoulli bit with ``P(1)`` in ``[1/(g B) - delta, 1/(g B)]``, ``B = cfg.backoff``.

    Same probing as :func:`urn_probe_value` but truncated at ``num_urns * B``
    probes: ``Z = i / (num_urns * B)`` on a hit, 0 otherwise; returns 1 with
    probability ``Z``.
    """
    if num_urns < 1:
        raise UsageError("need at least one urn")
    limit = num_urns * cfg.backoff
    i = _first_hit(num_urns, _as_predicate(is_nonempty), rng, limit)
    return int(rng.random() * limit < i)


def degree_exact(sub: SubCollection, x: int) -> int:
    """Number of sets in ``sub`` holding ``x`` as an active member."""
    store = sub.store
    pos, active = store._pos, store._active
    g = 0
    for h in sub.sets:
        p = pos[h].get(x)
        if p is not None and p < active[h]:
            g += 1
    return g


def _degree_estimate(sub: SubCollection, x: int, eps: float, delta: float,
                     rng: RandomStream):
    store = sub.store
    pos, active, sets = store._pos, store._active, sub.sets

    def holds(j: int) -> bool:
        h = sets[j]
        p = pos[h].get(x)
        return p is not None and p < active[h]

    return estimate_subset_size(len(sets), holds, eps, delta, rng)


def degree_estimate(sub: SubCollection, x: int, eps: float, delta: float,
                    rng: RandomStream) -> float:
    """``(1 +- eps)``-estimate of :func:`degree_exact` with probability ``>= 1 - delta``."""
    est = _degree_estimate(sub, x, eps, delta, rng)
    if est.empty:
        raise EmptyEstimate(f"element {x} not found in any set within {est.probes} probes")
    return est.value


def _propose(sub: SubCollection, rng: RandomStream) -> tuple[int, int]:
    i = sub.size_index.sample(rng)
    h = sub.sets[i]
    store = sub.store
    return i, store._members[h][rng.below(store._active[h])]


def _require_mass(sub: SubCollection) -> None:
    if sub.total_size <= 0:
        raise EmptyUnion("sub-collection has no active element")


def sample_union_exact(sub: SubCollection, rng: RandomStream,
                       max_rounds: int | None = None) -> SampleReport:
    """Exactly uniform draw from the union, via exact degrees."""
    _require_mass(sub)
    s = len(sub)
    if max_rounds is None:
        max_rounds = default_max_rounds(s, sub.total_size)
    probes = 0
    for rounds in range(1, max_rounds + 1):
        _, x = _propose(sub, rng)
        g = degree_exact(sub, x)
        probes += s
        if rng.random() * g < 1.0:
            return SampleReport(x, rounds, probes)
    raise RoundBudgetExhausted(max_rounds)


def sample_union_approx(sub: SubCollection, eps: float, rng: RandomStream,
                        max_rounds: int | None = None,
                        delta: float | None = None) -> SampleReport:
    """Near-uniform draw using an estimated degree per proposal.

    Each proposal ``x`` is accepted with probability ``min(1, 1/d)`` where
    ``d`` is a fresh :func:`degree_estimate`.  ``delta`` defaults to
    ``eps / (4 s)``.
    """
    _require_mass(sub)
    s = len(sub)
    if delta is None:
        delta = eps / (4.0 * s)
    if max_rounds is None:
        max_rounds = default_max_rounds(s, sub.total_size)
    probes = 0
    for rounds in range(1, max_rounds + 1):
        _, x = _propose(sub, rng)
        est = _degree_estimate(sub, x, eps, delta, rng)
        probes += est.probes
        # x was just drawn from a member set, so an empty estimate only
        # means the probe cap ran out; treat it as a rejection
        if not est.empty and rng.random() * est.value < 1.0:
            return SampleReport(x, rounds, probes)
    raise RoundBudgetExhausted(max_rounds)


def _probe_accept(sub: SubCollection, x: int, limit: int, rng: RandomStream) -> tuple[bool, int]:
    # urn-probe acceptance over the sets of sub, inlined for speed
    store = sub.store
    pos, active, sets = store._pos, store._active, sub.sets
    s = len(sets)
    i = 0
    while i < limit:
        i += 1
        h = sets[rng.below(s)]
        p = pos[h].get(x)
        if p is not None and p < active[h]:
            return rng.random() * limit < i, i
    return False, i


def sample_union_simulated(sub: SubCollection, eps: float, rng: RandomStream,
                           max_rounds: int | None = None) -> SampleReport:
    """Near-uniform draw without computing degrees.

    A proposal ``x`` is accepted iff :func:`urn_probe_bit` over the sets of
    ``sub`` (an urn is non-empty iff its set holds ``x``) returns 1, with
    ``delta = eps / (4 s)``.
    """
    _require_mass(sub)
    s = len(sub)
    cfg = UrnConfig.for_union(s, eps)
    if max_rounds is None:
        max_rounds = default_max_rounds(s, sub.total_size, cfg.backoff)
    limit = s * cfg.backoff
    probes = 0
    for rounds in range(1, max_rounds + 1):
        _, x = _propose(sub, rng)
        ok, used = _probe_accept(sub, x, limit, rng)
        probes += used
        if ok:
            return SampleReport(x, rounds, probes)
    raise RoundBudgetExhausted(max_rounds)


def sample_union_outliers(sub: SubCollection, is_outlier: Callable[[int], bool],
                          max_outliers: int, eps: float, rng: RandomStream,
                          max_rounds: int | None = None) -> SampleReport:
    """Near-uniform draw from the union minus the outliers.

    Proposals that are outliers get deactivated in the set they were drawn
    from, and that set's weight drops by one.  Once more than
    ``max_outliers`` (outlier, set) pairs have been discovered the call
    raises :class:`TooManyOutliers`.  Whatever the outcome, every touched
    set and weight is rewound before returning.
    """
    _require_mass(sub)
    s = len(sub)
    cfg = UrnConfig.for_union(s, eps)
    if max_rounds is None:
        max_rounds = default_max_rounds(s, sub.total_size, cfg.backoff)
    limit = s * cfg.backoff
    store, index, sets = sub.store, sub.size_index, sub.sets
    saved: dict[int, tuple[int, float]] = {}
    found = probes = 0
    try:
        for rounds in range(1, max_rounds + 1):
            if index.total <= 0.0:
                raise EmptyUnion("every element of the sub-collection is an outlier")
            i, x = _propose(sub, rng)
            if is_outlier(x):
                h = sets[i]
                if i not in saved:
                    saved[i] = (store._active[h], index.weight(i))
                store.deactivate(h, x)
                index.update(i, index.weight(i) - 1.0)
                found += 1
                if found > max_outliers:
                    raise TooManyOutliers(found, max_outliers)
                continue
            ok, used = _probe_accept(sub, x, limit, rng)
            probes += used
            if ok:
                return SampleReport(x, rounds, probes, found)
        raise RoundBudgetExhausted(max_rounds)
    finally:
        for i, (active, weight) in saved.items():
            store.restore(sets[i], active)
            index.update(i, weight)


@dataclass(frozen=True)
class BatchReport:
    elements: np.ndarray
    rounds: int
    probes: int


def sample_union_simulated_batch(sub: SubCollection, eps: float, rng: RandomStream,
                                 count: int, block: int = 1 << 20) -> BatchReport:
    """``count`` independent draws of :func:`sample_union_simulated`.

    Runs the same rounds in compiled code over a snapshot of the
    sub-collection; the sub-collection is not modified.  Intended for large
    Monte Carlo runs.
    """
    _require_mass(sub)
    if count < 0:
        raise UsageError("count must be nonnegative")
    store = sub.store
    s = len(sub)
    cfg = UrnConfig.for_union(s, eps)
    limit = s * cfg.backoff
    block = max(block, 4 * (limit + 3))
    active_sets = [store.active_members(h) for h in sub.sets]
    universe = np.unique(np.concatenate([np.asarray(a, dtype=np.int64) for a in active_sets]))
    sizes = np.array([len(a) for a in active_sets], dtype=np.int64)
    cum = np.cumsum(sizes)
    offsets = np.concatenate([[0], cum[:-1]]).astype(np.int64)
    flat = np.searchsorted(universe, np.concatenate(
        [np.asarray(a, dtype=np.int64) for a in active_sets]))
    member = np.zeros((s, universe.size), dtype=np.bool_)
    for j, a in enumerate(active_sets):
        if a:
            member[j, np.searchsorted(universe, a)] = True
    out = np.empty(count, dtype=np.int64)
    n_out = rounds = probes = 0
    while n_out < count:
        u = rng.uniforms(block)
        _, n_out, r, p = _kernels.simulated_rounds(cum, offsets, flat, member,
                                                   cfg.backoff, u, out, n_out)
        rounds += r
        probes += p
    return BatchReport(universe[out], rounds, probes)
