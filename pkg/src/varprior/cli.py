"""Command-line entry point.

Verbs: run, reproduce, emit-plot-data, validate-config.
Exit codes: 0 success, 1 configuration error, 2 runtime error.
The VARP_SEED environment variable overrides the RNG seed (for CI).
"""

from __future__ import annotations

import argparse
import os
import sys

from .experiments import ConfigError, load_config, run_experiment, validate_config
from .plotdata import emit_plot_data
from .repro import REPRODUCIBLE_IDS, reproduce


def _apply_threads(n):
    if n is None:
        return
    # best effort: caps BLAS pools; random streams do not depend on this
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _seed_from(args):
    env = os.environ.get("VARP_SEED")
    if args.seed is not None:
        return args.seed
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"VARP_SEED must be an integer, got {env!r}")
    return None


def _parse_overrides(pairs):
    """--set a.b.c=value pairs into a nested override dict."""
    import json as _json
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            value = _json.loads(raw)
        except _json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varp",
        description="Variational approximation of objective priors: train, "
                    "sample posteriors, evaluate, reproduce benchmarks.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run one experiment config (TOML)")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="artifact directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None)

    p_rep = sub.add_parser("reproduce", help="run a named benchmark experiment")
    p_rep.add_argument("experiment", choices=sorted(REPRODUCIBLE_IDS))
    p_rep.add_argument("--out", default=None)
    p_rep.add_argument("--seed", type=int, default=None)
    p_rep.add_argument("--threads", type=int, default=None)
    p_rep.add_argument("--set", dest="overrides", action="append", metavar="KEY=VAL",
                       help="config override, dotted path (repeatable)")

    p_emit = sub.add_parser("emit-plot-data", help="tidy CSVs for plotting")
    p_emit.add_argument("artifact_dir")
    p_emit.add_argument("figure", help="mi_trace|prior_hist|posterior_hist|ecdf|scatter")
    p_emit.add_argument("--out", default=None)

    p_val = sub.add_parser("validate-config", help="check a config file")
    p_val.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "run":
            _apply_threads(args.threads)
            cfg = load_config(args.config)
            validate_config(cfg)
            out = args.out or cfg.get("out")
            if out is None:
                raise ConfigError("no output directory: pass --out or set out = ...")
            path = run_experiment(cfg, out, _seed_from(args))
            print(f"artifacts written to {path}")
        elif args.verb == "reproduce":
            _apply_threads(args.threads)
            out = args.out or f"runs/{args.experiment}"
            path = reproduce(args.experiment, out, seed=_seed_from(args),
                             overrides=_parse_overrides(args.overrides))
            print(f"artifacts written to {path}")
        elif args.verb == "emit-plot-data":
            path = emit_plot_data(args.artifact_dir, args.figure, args.out)
            print(f"wrote {path}")
        elif args.verb == "validate-config":
            validate_config(load_config(args.config))
            print("config OK")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
