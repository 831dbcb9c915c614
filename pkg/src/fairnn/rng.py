"""Explicit random-stream handles.

Every sampler in the package takes a :class:`RandomStream` rather than
touching global state, so equal seeds and equal call sequences give equal
outputs.  The stream wraps a :class:`numpy.random.Generator` (PCG64 by
default) and serves scalar uniforms out of a pre-drawn block, which keeps
the pure-Python rejection loops cheap.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

_BLOCK = 4096


class RandomStream:
    """Buffered scalar/vector uniform source backed by a numpy Generator."""

    __slots__ = ("generator", "_buf", "_pos")

    def __init__(self, seed: int | Sequence[int] | np.random.SeedSequence | None = None,
                 *, generator: np.random.Generator | None = None) -> None:
        if generator is None:
            generator = np.random.default_rng(seed)
        self.generator = generator
        self._buf: list[float] = []
        self._pos = 0

    def random(self) -> float:
        """One uniform draw from [0, 1)."""
        pos = self._pos
        if pos == len(self._buf):
            self._buf = self.generator.random(_BLOCK).tolist()
            pos = 0
        self._pos = pos + 1
        return self._buf[pos]

    def below(self, n: int) -> int:
        """Uniform integer in ``range(n)``; ``n`` must be positive."""
        i = int(self.random() * n)
        # guards the (measure-zero) rounding of u*n up to n
        return i if i < n else n - 1

    def uniforms(self, size: int) -> np.ndarray:
        """A fresh vector of uniforms drawn straight from the generator."""
        return self.generator.random(size)

    def spawn(self, *key: int) -> RandomStream:
        """Independent child stream labelled by ``key``.

        The child's seed is drawn from this stream, so the derivation is
        itself reproducible.
        """
        root = int(self.generator.integers(0, 2**63))
        return RandomStream(np.random.SeedSequence([root, *key]))


def as_stream(rng: RandomStream | np.random.Generator | int | None) -> RandomStream:
    """Coerce a seed or Generator into a :class:`RandomStream`."""
    if isinstance(rng, RandomStream):
        return rng
    if isinstance(rng, np.random.Generator):
        return RandomStream(generator=rng)
    return RandomStream(rng)
