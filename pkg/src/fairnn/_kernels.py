"""Compiled inner loops for the batch samplers.

The kernels never draw randomness themselves: callers pass a block of
uniforms produced by a numpy Generator, and each kernel reports how many it
consumed.  A kernel only starts a round when the remaining block is large
enough to finish it, so results are identical to running the same rounds
one at a time over the same uniform sequence.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def simulated_rounds(cum_sizes, offsets, flat, member, backoff, uniforms, out, n_out):
    """Rejection rounds of the urn-probe union sampler.

    ``cum_sizes``/``offsets``/``flat`` describe the sets in CSR form with
    element ids compressed to ``0..U-1``; ``member[j, x]`` tells whether set
    ``j`` holds ``x``.  Accepted ids are written to ``out`` from ``n_out``.
    Returns ``(uniforms_used, n_out, rounds, probes)``.
    """
    s = cum_sizes.shape[0]
    m = cum_sizes[s - 1]
    limit = s * backoff
    k = 0
    rounds = 0
    probes = 0
    need = limit + 3
    nu = uniforms.shape[0]
    want = out.shape[0]
    while n_out < want and k + need <= nu:
        rounds += 1
        i = np.searchsorted(cum_sizes, uniforms[k] * m, side="right")
        if i >= s:
            i = s - 1
        size = cum_sizes[i] - (cum_sizes[i - 1] if i > 0 else 0)
        pos = int(uniforms[k + 1] * size)
        if pos >= size:
            pos = size - 1
        x = flat[offsets[i] + pos]
        k += 2
        hit = 0
        for t in range(1, limit + 1):
            j = int(uniforms[k] * s)
            k += 1
            if j >= s:
                j = s - 1
            probes += 1
            if member[j, x]:
                hit = t
                break
        if uniforms[k] * limit < hit:
            out[n_out] = x
            n_out += 1
        k += 1
    return k, n_out, rounds, probes


@njit(cache=True)
def first_hit_counts(xs, member, uniforms):
    """Probe uniformly random rows of ``member`` until ``member[row, x]``.

    Returns ``(counts, uniforms_used)``, where ``counts[a]`` is the 1-based
    probe index of the first hit for ``xs[a]``.  Stops early (leaving
    zeros) when the block runs out; callers then refill and continue from
    the first zero.  Every ``x`` must be held by at least one row.
    """
    rows = member.shape[0]
    counts = np.zeros(xs.shape[0], dtype=np.int64)
    k = 0
    nu = uniforms.shape[0]
    for a in range(xs.shape[0]):
        x = xs[a]
        start = k
        t = 0
        while True:
            if k >= nu:
                return counts, start
            j = int(uniforms[k] * rows)
            k += 1
            if j >= rows:
                j = rows - 1
            t += 1
            if member[j, x]:
                counts[a] = t
                break
    return counts, k
