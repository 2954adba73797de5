"""Command line entry point: ``rolsh-bench VERB [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import bench
from .errors import ConfigError, ModelNotFound

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3
VERBS = ("index", "truth", "train", "eval", "report", "demo", "all")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rolsh-bench", description="LSH radius-prediction benchmark.")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", metavar="PATH", help="YAML experiment config")
    p.add_argument("--seed", type=int, metavar="U64", help="master seed")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--scenarios", metavar="LIST", help="comma-separated scenario ids, e.g. 1,3")
    p.add_argument("--kinds", metavar="LIST", help="comma-separated regressor kinds, e.g. linear,mlp")
    p.add_argument("--threads", type=int, metavar="N", help=f"parallel fit workers (fallback: ${bench.THREADS_ENV})")
    p.add_argument("--k", type=int, help="demo: neighbours per query")
    p.add_argument("--count", type=int, help="demo: number of held-out queries")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _print_demo(result: bench.DemoResult, out=None) -> None:
    out = out or sys.stdout
    cols = ("query", "levels_from_one", "radius_from_one", "recall_from_one",
            "start_radius", "levels_predicted", "radius_predicted", "recall_predicted")
    print("  ".join(f"{c:>16}" for c in cols), file=out)
    for row in result.rows:
        cells = [f"{row[c]:>16.3f}" if isinstance(row[c], float) else f"{row[c]:>16}" for c in cols]
        print("  ".join(cells), file=out)
    for key, value in result.summary.items():
        print(f"{key}: {value:.4f}" if isinstance(value, float) else f"{key}: {value}", file=out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = bench.load_config(
            args.config, seed=args.seed, out=args.out, scenarios=args.scenarios,
            kinds=args.kinds, threads=bench.resolve_threads(args.threads),
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.verb == "demo":
            # an explicit --scenarios picks the demo's scenario too
            sid = config.scenarios[0] if args.scenarios else None
            kind = config.kinds[0] if args.kinds else None
            result = bench.run_query_demo(config, args.k, args.count, scenario=sid, kind=kind)
            path = bench.Path(config.out) / "demo.csv"
            result.write_csv(path)
            _print_demo(result)
            print(f"wrote {path}")
            return EXIT_OK
        result = bench.run_experiment(config, args.verb)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelNotFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except bench.StageFailure as exc:
        print(f"error: {exc} (see {config.out}/{bench.FAILED})", file=sys.stderr)
        return EXIT_STAGE

    if args.verb in ("report", "all"):
        for path in result:
            print(f"wrote {path}")
    else:
        print(f"{args.verb}: done ({config.out})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
