"""Oracles and instance builders shared by the test modules."""

import math
from fractions import Fraction

import numpy as np

ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    print(ACCEPTANCE_LINES[-1])


def brute_union(family):
    out = set()
    for s in family:
        out.update(s)
    return out


def brute_degree(family, x):
    return sum(x in s for s in family)


def empirical_tvd(samples, support):
    """TVD between the empirical law of ``samples`` and uniform on ``support``."""
    support = sorted(support)
    counts = {x: 0 for x in support}
    stray = 0
    for x in samples:
        if x in counts:
            counts[x] += 1
        else:
            stray += 1
    n = len(samples)
    u = 1.0 / len(support)
    return 0.5 * (sum(abs(c / n - u) for c in counts.values()) + stray / n)


def ratio_band(n_items: int, n_samples: int) -> float:
    """4-sigma relative band for the ratio of two cell counts under uniform sampling."""
    p = 1.0 / n_items
    return 4.0 * math.sqrt(2.0 * (1.0 - p) / (n_samples * p))


def urn_bit_probability(M: int, g: int, backoff: int) -> Fraction:
    """Exact P(X=1) of the truncated urn probe, by summing the finite series."""
    p = Fraction(g, M)
    limit = M * backoff
    total = Fraction(0)
    miss = Fraction(1)
    for i in range(1, limit + 1):
        total += Fraction(i, limit) * miss * p
        miss *= 1 - p
    return total


def random_family(rng: np.random.Generator, max_sets: int = 10, max_union: int = 50):
    """A random family of at most ``max_sets`` non-empty sets over at most ``max_union`` ids."""
    s = int(rng.integers(2, max_sets + 1))
    n = int(rng.integers(3, max_union + 1))
    family = []
    for _ in range(s):
        size = int(rng.integers(1, n + 1))
        family.append(sorted(rng.choice(n, size=size, replace=False).tolist()))
    return family


def random_unit_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def planted_instance(seed: int, dim: int = 16, r: float = 1.0, c: float = 2.0,
                     inner: int = 20, annulus: int = 20, far: int = 500,
                     far_range: tuple[float, float] = (3.0, 6.0)):
    """Query at the origin with points planted at controlled distances.

    Returns ``(points, q, inner_ids, annulus_ids, far_ids)``.  Inner points
    lie in ``[0.1 r, r]``, annulus points in ``(r, c r]`` and far points in
    ``far_range`` multiples of ``c r`` (default ``[3 c r, 6 c r]``).
    """
    rng = np.random.default_rng(seed)
    radii = np.concatenate([
        rng.uniform(0.1 * r, r, inner),
        rng.uniform(1.05 * r, c * r, annulus),
        rng.uniform(far_range[0] * c * r, far_range[1] * c * r, far),
    ])
    pts = random_unit_vectors(rng, radii.size, dim) * radii[:, None]
    ids = np.arange(radii.size)
    return (pts, np.zeros(dim), ids[:inner], ids[inner:inner + annulus],
            ids[inner + annulus:])
