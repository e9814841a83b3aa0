"""Command-line harness: generate | estimate | bench | sweep.

Exit codes: 0 on success, 2 on usage errors, 3 when an algorithm refuses a
stream that violates its contract (wrong mode or order).  All output is
deterministic under a fixed --seed; wall-clock timings only appear with
--timings because they would break byte-identical reruns.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .core import ModeError, RANDOM_ORDER, TURNSTILE
from .harness import (
    ALGORITHMS,
    CSV_HEADER,
    bench,
    run_estimator,
    summarize,
    sweep,
)
from .streamgen import GenerationError, GeneratorSpec, add_deletions, gen
from .streamio import read_stream, write_binary_stream, write_text_stream

EXIT_USAGE = 2
EXIT_REFUSED = 3

_ORDER_ALIASES = {
    "rand": "random-shuffle",
    "random-shuffle": "random-shuffle",
    "sorted": "sorted",
    "round-robin": "round-robin",
    "clustered": "clustered",
}

_KIND_ALIASES = {
    "uniform": "uniform",
    "zipf": "zipf",
    "planted": "planted-heavy",
    "planted-heavy": "planted-heavy",
    "spike": "spike",
}


def _spec_from_args(args) -> GeneratorSpec:
    kind = _KIND_ALIASES[args.kind]
    return GeneratorSpec(
        kind=kind,
        n=args.n,
        m=args.m,
        order=_ORDER_ALIASES[args.order],
        seed=args.seed,
        zipf_s=args.s,
        planted_k=args.k,
        planted_strength=args.strength,
        case=args.case,
        p=args.p,
        eps=args.eps,
        spike_c=args.spike_c,
        spike_item=args.spike_item,
    )


def _add_generator_flags(sub, need_m: bool):
    sub.add_argument("--kind", required=True, choices=sorted(_KIND_ALIASES))
    sub.add_argument("--n", type=int, required=True)
    sub.add_argument("--m", type=int, default=None)
    sub.add_argument("--order", default="rand", choices=sorted(_ORDER_ALIASES))
    sub.add_argument("--s", type=float, default=1.2, help="zipf skew")
    sub.add_argument("--k", type=int, default=3, help="planted heavy item count")
    sub.add_argument("--strength", type=float, default=0.3)
    sub.add_argument("--case", type=int, default=1, choices=(1, 2, 3))
    sub.add_argument("--spike-c", type=float, default=None)
    sub.add_argument("--spike-item", type=int, default=None)
    sub.add_argument("--deletions", type=float, default=0.0,
                     help="turnstile deletion fraction")


def _print_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_generate(args) -> int:
    spec = _spec_from_args(args)
    if spec.kind != "spike" and spec.m is None:
        print("error: --m is required for this kind", file=sys.stderr)
        return EXIT_USAGE
    stream = gen(spec)
    items, deltas, meta = stream.items, stream.deltas, stream.meta
    if args.deletions:
        items, deltas = add_deletions(items, args.deletions, spec.seed)
        meta = replace(meta, m=len(items), mode=TURNSTILE)
    if args.format == "binary":
        write_binary_stream(args.out, items, deltas, meta)
    else:
        write_text_stream(args.out, items, deltas, meta)
    _print_json({"path": args.out, "n": meta.n, "m": meta.m, "mode": meta.mode,
                 "order": meta.order, **stream.detail})
    return 0


def cmd_estimate(args) -> int:
    items, deltas, meta = read_stream(
        args.stream, order=args.assume_order, poly_exponent=args.poly_exponent
    )
    try:
        estimate, space = run_estimator(
            args.algorithm, items, deltas, meta.n, args.p, args.eps, args.seed,
            constants_mode=args.constants_mode, order=meta.order, mode=meta.mode,
        )
    except ModeError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    out = {"algorithm": args.algorithm, "n": meta.n, "m": meta.m,
           "p": args.p, "eps": args.eps, "estimate": estimate}
    if space is not None:
        out["counters"] = space.counters_allocated
        out["bits_estimate"] = space.bits_estimate
    if args.with_oracle:
        from .core import apply_stream_arrays, exact_fp
        oracle = exact_fp(apply_stream_arrays(items, deltas, meta.n), args.p)
        out["oracle"] = oracle
        out["rel_err"] = (estimate - oracle) / oracle if oracle else 0.0
    _print_json(out)
    return 0


def cmd_bench(args) -> int:
    spec = _spec_from_args(args)
    try:
        results = bench(spec, args.algorithm, args.p, args.eps, args.trials,
                        master_seed=args.seed, constants_mode=args.constants_mode,
                        deletion_fraction=args.deletions, workers=args.workers)
    except ModeError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    rows = [CSV_HEADER] + [r.csv_row() for r in results]
    if args.timings:
        rows[0] += ",wall_time_s"
        for i, r in enumerate(results):
            rows[i + 1] += f",{r.wall_time_s:.3f}"
    csv_text = "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    _print_json(summarize(results, args.algorithm, spec, args.p, args.eps))
    return 0


def cmd_sweep(args) -> int:
    n_values = [int(v) for v in args.n_list.split(",")]
    if len(set(n_values)) < 4:
        print("error: sweep needs at least 4 distinct n values", file=sys.stderr)
        return EXIT_USAGE
    fit = sweep(n_values, args.p, args.eps, algorithm=args.algorithm,
                master_seed=args.seed, constants_mode=args.constants_mode,
                trials=args.trials)
    rows = fit.pop("rows")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("n,counters,bits\n")
            for row in rows:
                fh.write(f"{row['n']},{row['counters']},{row['bits']}\n")
    _print_json(fit)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpstream",
        description="Frequency-moment estimation harness (streams, p > 2)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic stream file")
    _add_generator_flags(g, need_m=True)
    g.add_argument("--p", type=float, default=3.0)
    g.add_argument("--eps", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--format", choices=("text", "binary"), default="text")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("estimate", help="estimate F_p of a stream file")
    e.add_argument("stream")
    e.add_argument("--algorithm", required=True, choices=ALGORITHMS)
    e.add_argument("--p", type=float, default=3.0)
    e.add_argument("--eps", type=float, default=0.25)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--constants-mode", default="practical", choices=("paper", "practical"))
    e.add_argument("--with-oracle", action="store_true")
    e.add_argument("--assume-order", default=None,
                   choices=(RANDOM_ORDER, "arbitrary"),
                   help="override the stream file's declared order")
    e.add_argument("--poly-exponent", type=int, default=3)
    e.set_defaults(func=cmd_estimate)

    b = sub.add_parser("bench", help="seeded estimator-vs-oracle trials")
    _add_generator_flags(b, need_m=True)
    b.add_argument("--algorithm", required=True, choices=ALGORITHMS)
    b.add_argument("--p", type=float, default=3.0)
    b.add_argument("--eps", type=float, default=0.25)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--trials", type=int, default=10)
    b.add_argument("--constants-mode", default="practical", choices=("paper", "practical"))
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--timings", action="store_true",
                   help="append wall times (breaks byte-identical reruns)")
    b.add_argument("--out", default=None, help="CSV path (default: stdout)")
    b.set_defaults(func=cmd_bench)

    w = sub.add_parser("sweep", help="space-scaling sweep over universe sizes")
    w.add_argument("--n-list", required=True,
                   help="comma-separated universe sizes (>= 4 distinct)")
    w.add_argument("--algorithm", default="ro1pass",
                   choices=("ro1pass", "tp-insert", "tp-turnstile"))
    w.add_argument("--p", type=float, default=3.0)
    w.add_argument("--eps", type=float, default=0.25)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--trials", type=int, default=1)
    w.add_argument("--constants-mode", default="practical", choices=("paper", "practical"))
    w.add_argument("--out", default=None)
    w.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except GenerationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
