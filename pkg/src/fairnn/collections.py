"""Set families, weighted sampling and subset-size estimation.

:class:`SetStore` keeps each set as an array plus a position map, giving
constant-time membership and uniform draws.  Members of a set are split
into an *active prefix* and a deactivated tail; deactivating an element
swaps it to the end of the prefix, and :meth:`SetStore.restore` simply
resets the prefix length.

:class:`WeightedIndex` is an array-backed sum tree: draws and updates cost
one root-to-leaf walk.

Neither structure is safe for concurrent mutation.  Readers may share an
instance only while no thread updates, deactivates or restores.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass

from .errors import EmptySet, UsageError, ZeroTotalWeight
from .rng import RandomStream

log = logging.getLogger(__name__)


class SetStore:
    """A fixed family of sets over dense integer element ids.

    Sets are created once, from ``sets``, and addressed by their integer
    handle (position in ``sets``).  Elements may belong to many sets but
    appear at most once in each.
    """

    __slots__ = ("_members", "_pos", "_active")

    def __init__(self, sets: Iterable[Iterable[int]] = ()) -> None:
        self._members: list[list[int]] = []
        self._pos: list[dict[int, int]] = []
        self._active: list[int] = []
        for members in sets:
            members = [int(x) for x in members]
            pos = {x: i for i, x in enumerate(members)}
            if len(pos) != len(members):
                raise UsageError(f"set {len(self._members)} lists an element twice")
            if any(x < 0 for x in members):
                raise UsageError("element ids must be nonnegative")
            self._members.append(members)
            self._pos.append(pos)
            self._active.append(len(members))

    def __len__(self) -> int:
        return len(self._members)

    def _check(self, h: int) -> None:
        if not 0 <= h < len(self._members):
            raise UsageError(f"invalid set handle {h!r}")

    def size(self, h: int) -> int:
        """Number of members of set ``h``, active or not."""
        self._check(h)
        return len(self._members[h])

    def active_count(self, h: int) -> int:
        self._check(h)
        return self._active[h]

    def active_members(self, h: int) -> list[int]:
        self._check(h)
        return self._members[h][: self._active[h]]

    def contains(self, h: int, x: int) -> bool:
        """True iff ``x`` is an active member of set ``h``."""
        self._check(h)
        p = self._pos[h].get(x)
        return p is not None and p < self._active[h]

    def sample_uniform(self, h: int, rng: RandomStream) -> int:
        """Uniform draw among the active members of set ``h``."""
        self._check(h)
        a = self._active[h]
        if a == 0:
            raise EmptySet(f"set {h} has no active members")
        return self._members[h][rng.below(a)]

    def deactivate(self, h: int, x: int) -> bool:
        """Move ``x`` out of the active prefix of set ``h``.

        Returns False (and changes nothing) if ``x`` is not currently an
        active member.
        """
        self._check(h)
        pos = self._pos[h]
        p = pos.get(x)
        a = self._active[h]
        if p is None or p >= a:
            return False
        members = self._members[h]
        last = a - 1
        y = members[last]
        members[p], members[last] = y, x
        pos[y], pos[x] = p, last
        self._active[h] = last
        return True

    def restore(self, h: int, active_count: int | None = None) -> None:
        """Reactivate the members of set ``h``.

        By default every member becomes active.  Passing ``active_count``
        rewinds the prefix to an earlier length instead; since deactivation
        only ever shrinks the prefix from the end, this undoes exactly the
        deactivations made since the prefix had that length.
        """
        self._check(h)
        size = len(self._members[h])
        if active_count is None:
            active_count = size
        elif not self._active[h] <= active_count <= size:
            raise UsageError(f"cannot rewind set {h} to active_count {active_count}")
        self._active[h] = active_count


class WeightedIndex:
    """Sum tree over nonnegative leaf weights.

    Leaves sit in an implicit complete binary tree padded to the next power
    of two; padding leaves weigh zero.  Internal nodes are recomputed from
    their children on every update, so with integer-valued weights all
    totals are exact.
    """

    __slots__ = ("_n", "_cap", "_tree")

    def __init__(self, weights: Sequence[float] = ()) -> None:
        n = len(weights)
        cap = 1
        while cap < n:
            cap <<= 1
        tree = [0.0] * (2 * cap)
        for i, w in enumerate(weights):
            w = float(w)
            if not w >= 0.0 or math.isinf(w):
                raise UsageError(f"weight {i} must be a finite nonnegative number, got {w}")
            tree[cap + i] = w
        for p in range(cap - 1, 0, -1):
            tree[p] = tree[2 * p] + tree[2 * p + 1]
        self._n = n
        self._cap = cap
        self._tree = tree

    def __len__(self) -> int:
        return self._n

    @property
    def total(self) -> float:
        return self._tree[1]

    def weight(self, i: int) -> float:
        if not 0 <= i < self._n:
            raise UsageError(f"index {i} out of range for {self._n} weights")
        return self._tree[self._cap + i]

    def weights(self) -> list[float]:
        return self._tree[self._cap : self._cap + self._n]

    def update(self, i: int, w: float) -> None:
        """Replace leaf ``i``'s weight and refresh its ancestors."""
        if not 0 <= i < self._n:
            raise UsageError(f"index {i} out of range for {self._n} weights")
        w = float(w)
        if not w >= 0.0 or math.isinf(w):
            raise UsageError(f"weight must be a finite nonnegative number, got {w}")
        tree = self._tree
        p = self._cap + i
        tree[p] = w
        p >>= 1
        while p:
            tree[p] = tree[2 * p] + tree[2 * p + 1]
            p >>= 1

    def sample(self, rng: RandomStream) -> int:
        """Draw leaf ``i`` with probability ``weight(i) / total``."""
        tree = self._tree
        total = tree[1]
        if not total > 0.0:
            raise ZeroTotalWeight("cannot sample: total weight is zero")
        cap = self._cap
        u = rng.random() * total
        p = 1
        while p < cap:
            left = 2 * p
            lw = tree[left]
            if u < lw:
                p = left
            elif tree[left + 1] > 0.0:
                u -= lw
                p = left + 1
            else:
                # float slack pushed u past a nonzero left subtree
                p = left
        return p - cap

    def check_invariant(self, rel_tol: float = 0.0) -> bool:
        """True iff every internal node equals the sum of its children."""
        tree = self._tree
        for p in range(1, self._cap):
            s = tree[2 * p] + tree[2 * p + 1]
            if rel_tol == 0.0:
                if tree[p] != s:
                    return False
            elif not math.isclose(tree[p], s, rel_tol=rel_tol, abs_tol=0.0):
                return False
        return True


@dataclass(frozen=True)
class SizeEstimate:
    """Outcome of :func:`estimate_subset_size`.

    ``empty`` is set when the probe cap ran out without a single hit; the
    value is then 0.  ``delta`` is the failure bound actually used, after
    any clamping.
    """

    value: float
    probes: int
    hits: int
    empty: bool
    delta: float
    clamped: bool


def required_hits(eps: float, delta: float) -> int:
    return math.ceil(3.0 * math.log(2.0 / delta) / (eps * eps))


def probe_cap(universe_size: int, eps: float, delta: float) -> int:
    return math.ceil(64.0 * universe_size * math.log(2.0 / delta) / (eps * eps))


def clamp_delta(universe_size: int, delta: float) -> tuple[float, bool]:
    """Keep ``delta`` below ``1/log2(n)``; returns the value and whether it moved."""
    if universe_size > 2:
        lg = math.log2(universe_size)
        if delta >= 1.0 / lg:
            return 1.0 / (2.0 * lg), True
    return delta, False


def estimate_subset_size(universe_size: int, oracle: Callable[[int], bool],
                         eps: float, delta: float, rng: RandomStream,
                         max_probes: int | None = None) -> SizeEstimate:
    """Estimate ``|B|`` for ``B = {i < universe_size : oracle(i)}``.

    Positions are probed uniformly with replacement until the hit count
    reaches ``ceil(3 ln(2/delta) / eps^2)``; the estimate is
    ``hits * n / probes``.  Expected probes are ``O((n/|B|) eps^-2 log(1/delta))``.
    """
    if universe_size < 1:
        raise UsageError("universe_size must be positive")
    if not (0.0 < eps < 1.0 and 0.0 < delta < 1.0):
        raise UsageError("eps and delta must lie in (0, 1)")
    delta, clamped = clamp_delta(universe_size, delta)
    if clamped:
        log.debug("delta clamped to %.4g for universe of %d", delta, universe_size)
    target = required_hits(eps, delta)
    cap = probe_cap(universe_size, eps, delta) if max_probes is None else max_probes
    n = universe_size
    hits = probes = 0
    while hits < target and probes < cap:
        probes += 1
        if oracle(rng.below(n)):
            hits += 1
    if hits == 0:
        return SizeEstimate(0.0, probes, 0, True, delta, clamped)
    return SizeEstimate(hits * n / probes, probes, hits, False, delta, clamped)
