"""Fairness benchmark: four neighbor samplers compared by distance to uniform.

For each query the harness collects its buckets, computes ``M(q)`` (points
within ``r`` that share at least one bucket with the query) and draws
``draws_multiplier * |M(q)|`` samples with each algorithm:

``uniform-uniform``
    uniform non-empty bucket, then a uniform point in it;
``weighted-uniform``
    bucket with probability proportional to its size, then a uniform point;
``optimal``
    as weighted-uniform, then reject with probability ``1 - 1/deg(p)``;
``degree-approx``
    as weighted-uniform, then probe uniformly random buckets until one holds
    ``p``; if that takes ``i`` probes, accept with probability
    ``min(1, i / B)`` for ``B`` buckets, i.e. ``1/deg'`` with ``deg' = B/i``.

Draws landing outside ``M(q)`` are counted as discards and left out of
the histogram, so all four histograms share the support ``M(q)``.

Every (sweep setting, query, repeat, algorithm) cell draws from its own
seeded stream, so results do not depend on evaluation order.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import logging
import time
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .. import _kernels
from ..errors import UsageError
from ..lsh import LshIndex, LshParams, build_index
from ..rng import RandomStream
from .datasets import SynthSpec, load_dataset, synth_generate

log = logging.getLogger(__name__)

ALGORITHMS = ("uniform-uniform", "weighted-uniform", "optimal", "degree-approx")

_BLOCK = 1 << 16


@dataclass
class QueryView:
    """The query's buckets with element ids compressed to ``0..U-1``.

    ``member[b, x]`` is True iff bucket ``b`` holds ``universe[x]``.
    """

    universe: np.ndarray
    sizes: np.ndarray
    offsets: np.ndarray
    flat: np.ndarray
    member: np.ndarray

    @property
    def num_buckets(self) -> int:
        return self.sizes.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.member.sum(axis=0)


def query_view(index: LshIndex, q) -> QueryView:
    refs = index.query_buckets(q)
    store = index.store
    lists = [np.asarray(store.active_members(b.handle), dtype=np.int64) for b in refs]
    sizes = np.array([a.size for a in lists], dtype=np.int64)
    allm = np.concatenate(lists) if lists else np.zeros(0, dtype=np.int64)
    universe = np.unique(allm)
    flat = np.searchsorted(universe, allm)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    member = np.zeros((len(lists), universe.size), dtype=np.bool_)
    for b, a in enumerate(lists):
        member[b, flat[offsets[b]:offsets[b] + a.size]] = True
    return QueryView(universe, sizes, offsets, flat, member)


def compute_Mq(index: LshIndex, q, view: QueryView | None = None) -> np.ndarray:
    """Sorted ids of the points within ``r`` of ``q`` that share a bucket with it."""
    if view is None:
        view = query_view(index, q)
    if view.universe.size == 0:
        return view.universe
    q = np.asarray(q, dtype=np.float64)
    d = np.linalg.norm(index.points[view.universe] - q, axis=1)
    return view.universe[d <= index.params.r]


def tvd(hist: Sequence[float]) -> float:
    """Total variation distance between a histogram's empirical law and uniform on its support."""
    h = np.asarray(hist, dtype=np.float64)
    if h.size == 0:
        raise UsageError("empty support")
    total = h.sum()
    if not total > 0:
        raise UsageError("histogram has no mass")
    return float(0.5 * np.abs(h / total - 1.0 / h.size).sum())


@dataclass
class AlgorithmRun:
    hist: np.ndarray
    discards: int
    probes: int
    proposals: int
    seconds: float


def _propose_weighted(view: QueryView, rng: RandomStream, n: int) -> np.ndarray:
    # bucket with probability size/m, then a uniform position inside it
    cum = np.cumsum(view.sizes)
    m = cum[-1]
    b = np.searchsorted(cum, rng.uniforms(n) * m, side="right")
    b = np.minimum(b, view.num_buckets - 1)
    pos = np.minimum((rng.uniforms(n) * view.sizes[b]).astype(np.int64), view.sizes[b] - 1)
    return view.flat[view.offsets[b] + pos]


def _first_hits(view: QueryView, xs: np.ndarray, rng: RandomStream) -> np.ndarray:
    counts = np.zeros(xs.size, dtype=np.int64)
    done = 0
    while done < xs.size:
        c, _ = _kernels.first_hit_counts(xs[done:], view.member, rng.uniforms(_BLOCK))
        filled = int(np.argmin(c > 0)) if (c == 0).any() else c.size
        counts[done:done + filled] = c[:filled]
        done += filled
    return counts


def run_algorithm(alg: str, view: QueryView, mq: np.ndarray, draws: int,
                  rng: RandomStream, precompute_degrees: bool = False) -> AlgorithmRun:
    """Perform ``draws`` complete draws of ``alg`` and histogram them over ``mq``."""
    if alg not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {alg!r}")
    if mq.size == 0:
        raise UsageError("M(q) is empty")
    if draws < 1:
        raise UsageError("draws must be positive")
    start = time.perf_counter()
    B = view.num_buckets
    probes = proposals = 0
    if alg == "uniform-uniform":
        nonempty = np.flatnonzero(view.sizes > 0)
        b = nonempty[np.minimum((rng.uniforms(draws) * nonempty.size).astype(np.int64),
                                nonempty.size - 1)]
        pos = np.minimum((rng.uniforms(draws) * view.sizes[b]).astype(np.int64),
                         view.sizes[b] - 1)
        out = view.flat[view.offsets[b] + pos]
        proposals = draws
    elif alg == "weighted-uniform":
        out = _propose_weighted(view, rng, draws)
        proposals = draws
    else:
        deg = view.degrees if precompute_degrees else None
        chunks = []
        got = 0
        while got < draws:
            need = draws - got
            xs = _propose_weighted(view, rng, max(256, 2 * need))
            proposals += xs.size
            if alg == "optimal":
                if deg is None:
                    g = view.member[:, xs].sum(axis=0)
                    probes += B * xs.size
                else:
                    g = deg[xs]
                keep = rng.uniforms(xs.size) * g < 1.0
            else:
                i = _first_hits(view, xs, rng)
                probes += int(i.sum())
                keep = rng.uniforms(xs.size) * B < i
            acc = xs[keep]
            if acc.size > need:
                # drop proposals past the one completing the last draw
                cut = int(np.flatnonzero(keep)[need - 1]) + 1
                proposals -= xs.size - cut
                if alg == "degree-approx":
                    probes -= int(i[cut:].sum())
                elif deg is None:
                    probes -= B * (xs.size - cut)
                acc = acc[:need]
            chunks.append(acc)
            got += acc.size
        out = np.concatenate(chunks)
    ids = view.universe[out]
    slot = np.searchsorted(mq, ids)
    slot = np.minimum(slot, mq.size - 1)
    inside = mq[slot] == ids
    hist = np.bincount(slot[inside], minlength=mq.size)
    return AlgorithmRun(hist, int((~inside).sum()), probes, proposals,
                        time.perf_counter() - start)


@dataclass
class ExperimentConfig:
    dataset: str | None = None
    fmt: str = "fvecs"
    queries: str | None = None
    num_queries: int = 100
    synth: SynthSpec | None = None
    normalize: bool = True
    r: float = 1.0
    c: float = 2.0
    k: int = 15
    L: int = 100
    t: int = 1
    w: float = 4.0
    eps: float = 0.1
    draws_multiplier: int = 100
    repeats: int = 10
    seed: int = 0
    algorithms: tuple[str, ...] = ALGORITHMS
    sweep: dict[str, list[float]] = field(default_factory=dict)
    precompute_degrees: bool = False
    timings: bool = False

    def __post_init__(self) -> None:
        if self.draws_multiplier < 1 or self.repeats < 1:
            raise UsageError("draws_multiplier and repeats must be at least 1")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise UsageError(f"unknown algorithms: {', '.join(bad)}")
        for key in self.sweep:
            if key not in ("k", "L", "w", "r"):
                raise UsageError(f"cannot sweep {key!r}; choose from k, L, w, r")
        if self.dataset is None and self.synth is None:
            raise UsageError("need a dataset path or a synthetic spec")


@dataclass
class ResultRow:
    dataset: str
    algorithm: str
    k: int
    L: int
    w: float
    r: float
    query_id: str
    repeat_id: str
    mq_size: float
    draws: int
    discards: int
    tvd: float | None
    mean_probes: float | None
    wall_time: float | None
    status: str = "ok"


CSV_FIELDS = [f.name for f in dataclasses.fields(ResultRow)]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def write_rows(rows: Sequence[ResultRow], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in rows:
        writer.writerow([_fmt(getattr(row, f)) for f in CSV_FIELDS])


def _load_points(cfg: ExperimentConfig) -> tuple[str, np.ndarray, np.ndarray]:
    if cfg.synth is not None:
        data = synth_generate(cfg.synth)
        return "synthetic", data.points, data.queries[: cfg.num_queries]
    points = load_dataset(cfg.dataset, cfg.fmt, cfg.normalize)
    if points.size == 0:
        raise UsageError(f"dataset {cfg.dataset} holds no points")
    name = str(cfg.dataset)
    if cfg.queries is not None:
        queries = load_dataset(cfg.queries, cfg.fmt, cfg.normalize)[: cfg.num_queries]
        return name, points, queries
    # hold out random dataset rows as queries
    rng = np.random.default_rng([cfg.seed, 0xC0FFEE])
    pick = rng.permutation(points.shape[0])
    nq = min(cfg.num_queries, points.shape[0] - 1)
    return name, points[pick[nq:]], points[pick[:nq]]


def _settings(cfg: ExperimentConfig) -> Iterator[dict[str, float]]:
    keys = list(cfg.sweep)
    for values in itertools.product(*(cfg.sweep[k] for k in keys)):
        s = {"k": cfg.k, "L": cfg.L, "w": cfg.w, "r": cfg.r}
        s.update(zip(keys, values))
        yield s


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """Run every (setting, repeat, query, algorithm) cell plus per-algorithm mean rows."""
    name, points, queries = _load_points(cfg)
    rows: list[ResultRow] = []
    for si, s in enumerate(_settings(cfg)):
        k, L = int(s["k"]), int(s["L"])
        params = LshParams(dim=points.shape[1], k=k, L=L, w=float(s["w"]), r=float(s["r"]),
                           c=cfg.c, t=cfg.t, seed=cfg.seed)
        index = build_index(points, params)
        base = dict(dataset=name, k=k, L=L, w=params.w, r=params.r)
        views = [query_view(index, q) for q in queries]
        mqs = [compute_Mq(index, q, v) for q, v in zip(queries, views)]
        cell_rows: dict[str, list[ResultRow]] = {a: [] for a in cfg.algorithms}
        for rep in range(cfg.repeats):
            for qi, (view, mq) in enumerate(zip(views, mqs)):
                for ai, alg in enumerate(cfg.algorithms):
                    if mq.size == 0:
                        rows.append(ResultRow(algorithm=alg, query_id=str(qi),
                                              repeat_id=str(rep), mq_size=0, draws=0,
                                              discards=0, tvd=None, mean_probes=None,
                                              wall_time=None, status="skipped:empty-Mq",
                                              **base))
                        continue
                    draws = cfg.draws_multiplier * mq.size
                    rng = RandomStream(np.random.SeedSequence(
                        [cfg.seed, si, qi, rep, ALGORITHMS.index(alg)]))
                    run = run_algorithm(alg, view, mq, draws, rng, cfg.precompute_degrees)
                    accepted = draws - run.discards
                    row = ResultRow(
                        algorithm=alg, query_id=str(qi), repeat_id=str(rep),
                        mq_size=int(mq.size), draws=draws, discards=run.discards,
                        tvd=tvd(run.hist) if accepted > 0 else None,
                        mean_probes=run.probes / draws,
                        wall_time=run.seconds if cfg.timings else None,
                        status="ok" if accepted > 0 else "skipped:all-discarded", **base)
                    rows.append(row)
                    if row.tvd is not None:
                        cell_rows[alg].append(row)
        for alg in cfg.algorithms:
            done = cell_rows[alg]
            if not done:
                continue
            rows.append(ResultRow(
                algorithm=alg, query_id="mean", repeat_id="mean",
                mq_size=float(np.mean([r.mq_size for r in done])),
                draws=sum(r.draws for r in done), discards=sum(r.discards for r in done),
                tvd=float(np.mean([r.tvd for r in done])),
                mean_probes=float(np.mean([r.mean_probes for r in done])),
                wall_time=float(sum(r.wall_time for r in done)) if cfg.timings else None,
                status="aggregate", **base))
    return rows


def run_experiment_csv(cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    write_rows(run_experiment(cfg), buf)
    return buf.getvalue()
