"""``bench`` command line: ``run``, ``synth`` and ``inspect``.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 a sampling
budget ran out.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from ..errors import DataFormatError, RoundBudgetExhausted, TooManyOutliers, UsageError
from ..lsh import PRESETS, LshParams, build_index
from .datasets import SynthSpec, load_dataset, save_fvecs, synth_generate
from .experiment import ALGORITHMS, ExperimentConfig, compute_Mq, query_view, run_experiment, write_rows

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BUDGET = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_synth(text: str) -> SynthSpec:
    """Parse ``synth:n=2000,dim=16,clusters=10,radius=1,seed=0``."""
    body = text.split(":", 1)[1] if text.startswith("synth:") else text
    fields = {}
    for part in filter(None, body.split(",")):
        key, _, value = part.partition("=")
        fields[key.strip()] = value.strip()
    try:
        spec = SynthSpec(n=int(fields.pop("n", 2000)), dim=int(fields.pop("dim", 16)),
                         clusters=int(fields.pop("clusters", 10)),
                         radius=float(fields.pop("radius", 1.0)),
                         seed=int(fields.pop("seed", 0)),
                         spread=float(fields.pop("spread", 20.0)))
    except ValueError as e:
        raise UsageError(f"bad synthetic spec {text!r}: {e}") from None
    if fields:
        raise UsageError(f"unknown synthetic fields: {', '.join(fields)}")
    return spec


def parse_sweep(items: list[str]) -> dict[str, list[float]]:
    sweep = {}
    for item in items:
        key, sep, values = item.partition("=")
        if not sep:
            raise UsageError(f"--sweep expects NAME=v1,v2,..., got {item!r}")
        try:
            sweep[key.strip()] = [float(v) for v in values.split(",") if v]
        except ValueError:
            raise UsageError(f"non-numeric sweep value in {item!r}") from None
    return sweep


def _add_lsh_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True,
                   help="data file, or synth:n=..,dim=..,clusters=..,radius=..,seed=..")
    p.add_argument("--format", dest="fmt", choices=["fvecs", "idx", "text"], default="fvecs")
    p.add_argument("--no-normalize", dest="normalize", action="store_false",
                   help="keep text embeddings at their original length")
    p.add_argument("--queries", help="query file in the dataset's format")
    p.add_argument("--num-queries", type=int, default=100)
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="r, w, k, L defaults for a benchmark corpus")
    p.add_argument("--r", type=float)
    p.add_argument("--c", type=float, default=2.0)
    p.add_argument("--k", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--t", type=int, default=1)
    p.add_argument("--w", type=float)
    p.add_argument("--seed", type=int, default=0)


def _lsh_values(args) -> dict:
    vals = {"r": 1.0, "w": 4.0, "k": 15, "L": 100}
    if args.preset:
        vals.update(PRESETS[args.preset])
    for key in vals:
        v = getattr(args, key)
        if v is not None:
            vals[key] = v
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run the fairness experiment and write CSV")
    _add_lsh_flags(run)
    run.add_argument("--eps", type=float, default=0.1)
    run.add_argument("--draws-mult", type=int, default=100)
    run.add_argument("--repeats", type=int, default=10)
    run.add_argument("--algos", default=",".join(ALGORITHMS),
                     help="comma-separated subset of " + ", ".join(ALGORITHMS))
    run.add_argument("--sweep", action="append", default=[],
                     help="NAME=v1,v2,... over k, L, w or r; repeatable")
    run.add_argument("--precompute-degrees", action="store_true",
                     help="optimal algorithm looks degrees up instead of probing")
    run.add_argument("--timings", action="store_true",
                     help="fill the wall_time column (makes output nondeterministic)")
    run.add_argument("--out", help="CSV path; stdout if omitted")

    syn = sub.add_parser("synth", help="write a synthetic dataset and its planted queries")
    syn.add_argument("--n", type=int, default=2000)
    syn.add_argument("--dim", type=int, default=16)
    syn.add_argument("--clusters", type=int, default=10)
    syn.add_argument("--radius", type=float, default=1.0)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--out", required=True, help="output prefix; writes PREFIX.fvecs, "
                     "PREFIX.queries.fvecs")

    ins = sub.add_parser("inspect", help="summarise a dataset and its query neighborhoods")
    _add_lsh_flags(ins)
    return parser


def _config(args) -> ExperimentConfig:
    lsh = _lsh_values(args)
    synth = parse_synth(args.dataset) if args.dataset.startswith("synth:") else None
    algos = tuple(a.strip() for a in args.algos.split(",") if a.strip())
    return ExperimentConfig(
        dataset=None if synth else args.dataset, fmt=args.fmt, queries=args.queries,
        num_queries=args.num_queries, synth=synth, normalize=args.normalize,
        r=lsh["r"], c=args.c, k=int(lsh["k"]), L=int(lsh["L"]), t=args.t, w=lsh["w"],
        eps=args.eps, draws_multiplier=args.draws_mult, repeats=args.repeats,
        seed=args.seed, algorithms=algos, sweep=parse_sweep(args.sweep),
        precompute_degrees=args.precompute_degrees, timings=args.timings)


def cmd_run(args) -> int:
    rows = run_experiment(_config(args))
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_rows(rows, fh)
    else:
        write_rows(rows, sys.stdout)
    return EXIT_OK


def cmd_synth(args) -> int:
    data = synth_generate(SynthSpec(args.n, args.dim, args.clusters, args.radius, args.seed))
    save_fvecs(f"{args.out}.fvecs", data.points)
    save_fvecs(f"{args.out}.queries.fvecs", data.queries)
    print(f"wrote {data.points.shape[0]} points and {data.queries.shape[0]} queries "
          f"to {args.out}.fvecs, {args.out}.queries.fvecs")
    return EXIT_OK


def cmd_inspect(args) -> int:
    if args.dataset.startswith("synth:"):
        data = synth_generate(parse_synth(args.dataset))
        points, queries = data.points, data.queries
    else:
        points = load_dataset(args.dataset, args.fmt, args.normalize)
        queries = (load_dataset(args.queries, args.fmt, args.normalize)
                   if args.queries else np.zeros((0, points.shape[1] if points.size else 0)))
    print(f"points: {points.shape[0]} x {points.shape[1] if points.ndim == 2 else 0}")
    if points.size == 0 or queries.shape[0] == 0:
        return EXIT_OK
    lsh = _lsh_values(args)
    params = LshParams(dim=points.shape[1], k=int(lsh["k"]), L=int(lsh["L"]), w=lsh["w"],
                       r=lsh["r"], c=args.c, t=args.t, seed=args.seed)
    index = build_index(points, params)
    print(f"lsh: k={params.k} L={params.L} t={params.t} w={params.w} r={params.r}")
    print("query,union,mq,deg_min,deg_max")
    for qi, q in enumerate(queries[: args.num_queries]):
        view = query_view(index, q)
        mq = compute_Mq(index, q, view)
        if mq.size:
            deg = view.degrees[np.searchsorted(view.universe, mq)]
            print(f"{qi},{view.universe.size},{mq.size},{deg.min()},{deg.max()}")
        else:
            print(f"{qi},{view.universe.size},0,,")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "synth": cmd_synth, "inspect": cmd_inspect}
    try:
        return handlers[args.command](args)
    except UsageError as e:
        print(f"bench: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, OSError) as e:
        print(f"bench: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (RoundBudgetExhausted, TooManyOutliers) as e:
        print(f"bench: budget exhausted: {e}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
