"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance failure (``verify`` only).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..geometry import GeometryError
from ..singular import QuadratureError
from .config import ConfigError, ExperimentConfig, load_config
from .records import SchemaError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPT = 0, 2, 3, 4

# verb -> harness mode
VERBS = {
    "calibrate": "calibrate",
    "recover-value": "value",
    "recover-normal": "normal",
    "pipeline": "pipeline",
    "besov-rate": "besov-rate",
    "trace-check": "trace-check",
    "hardy-check": "hardy-check",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for parallel maps")
    common.add_argument("--test-mode", action="store_true", help="single-threaded, timing-free, byte-reproducible")

    parser = argparse.ArgumentParser(prog="calderon-lab", description="Boundary conductivity reconstruction lab")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        sub.add_parser(verb, parents=[common], help=f"run the {VERBS[verb]} experiment")
    v = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    v.add_argument("--only", type=int, nargs="+", metavar="N", help="criterion numbers to run")
    p = sub.add_parser("plot", help="render a result CSV to SVG")
    p.add_argument("csv", type=Path)
    p.add_argument("--kind", help="expected schema (default: from the header)")
    p.add_argument("--out", type=Path, help="SVG path")
    return parser


def _config(args, mode) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    updates = {"mode": mode}
    if args.out is not None:
        updates["output.dir"] = str(args.out)
    if args.seed is not None:
        updates["seed"] = args.seed
    vals = dict(cfg.values)
    vals.update(updates)
    return ExperimentConfig(vals, cfg.source)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "plot":
            from .plot import emit_plot

            print(emit_plot(args.csv, args.kind, args.out))
            return EXIT_OK
        if args.verb == "verify":
            from .acceptance import verify

            out = args.out or Path("verify")
            seed = args.seed or 0
            results = verify(out, threads=1 if args.test_mode else args.threads, seed=seed, numbers=args.only,
                             echo=print)
            return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPT
        from .run import run

        cfg = _config(args, VERBS[args.verb])
        rec = run(cfg, threads=args.threads, test_mode=args.test_mode)
        for row in rec.summary:
            print(",".join(str(c) for c in row))
        print(f"wrote {len(rec.files)} files to {rec.out_dir} (config {rec.config_hash[:12]})")
        return EXIT_OK
    except (ConfigError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, QuadratureError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
