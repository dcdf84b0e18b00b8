"""Command-line entry point.

    newton-admm reference --format idx --data imgs.gz --labels lbls.gz --out ref.npz
    newton-admm train --solver newton-admm --n-workers 4 --reference ref.npz --output m.jsonl
    newton-admm sweep --workers 1,2,4 --mode strong
    newton-admm theta 1.05 1.0

Every ``ExperimentConfig`` key is a flag (underscores become dashes).
``NEWTON_ADMM_THREADS`` pins the BLAS thread count. Exit status is 0 on
success, 2 for configuration or input errors, 3 when a solver fails or
diverges and 4 on transport failures.
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import MISSING, fields

from threadpoolctl import threadpool_limits

from . import bench
from .errors import ConfigError, InputError, SolverError, TransportError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_TRANSPORT = 0, 2, 3, 4

# fields whose default is None, so the type can't be read off the default
_OPTIONAL_TYPES = {"limit": int, "stop_at_theta": float, "time_budget": float}
_CHOICES = {"solver": bench.SOLVERS, "format": bench.FORMATS, "transport": bench.TRANSPORTS,
            "penalty_policy": ("fixed", "spectral"), "partition": ("contiguous", "strided")}
_HELP = {
    "lam": "l2 regularization weight",
    "inner_newton_steps": "Newton steps per worker per ADMM iteration",
    "lbfgs_inner_iters": "L-BFGS iterations per worker per ADMM iteration",
    "sweep": "run the SGD step-size sweep 1e-4..1e4 and keep the best",
    "reference": "saved reference optimum (.npz) for theta tracking",
    "stop_at_theta": "stop once theta falls to this value",
    "time_budget": "stop after this many timed seconds",
}


def _add_config_flags(parser, skip=()):
    group = parser.add_argument_group("experiment configuration")
    for f in fields(bench.ExperimentConfig):
        if f.name in skip:
            continue
        flag = "--" + f.name.replace("_", "-")
        default = f.default if f.default is not MISSING else None
        kwargs = {"dest": f.name, "default": argparse.SUPPRESS, "help": _HELP.get(f.name)}
        if isinstance(default, bool):
            kwargs["action"] = argparse.BooleanOptionalAction
        else:
            kwargs["type"] = _OPTIONAL_TYPES.get(f.name, type(default) if default is not None else str)
            if f.name in _CHOICES:
                kwargs["choices"] = _CHOICES[f.name]
        if kwargs["help"] is None:
            kwargs["help"] = f"(default: {default})"
        else:
            kwargs["help"] += f" (default: {default})"
        group.add_argument(flag, **kwargs)


def _config_from(args, **overrides):
    values = {f.name: getattr(args, f.name) for f in fields(bench.ExperimentConfig)
              if hasattr(args, f.name)}
    values.update(overrides)
    return bench.ExperimentConfig.from_dict(values)


def build_parser():
    parser = argparse.ArgumentParser(prog="newton-admm",
                                     description="Distributed Newton-ADMM for softmax classification.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reference", help="compute a high-precision single-node optimum")
    p.add_argument("--out", required=True, help="where to write the .npz reference")
    p.add_argument("--max-iters", type=int, default=200, help="Newton iteration budget")
    _add_config_flags(p, skip=("output", "reference"))

    p = sub.add_parser("train", help="run one solver and write metrics")
    _add_config_flags(p)

    p = sub.add_parser("sweep", help="strong or weak scaling over worker counts")
    p.add_argument("--workers", default="1,2,4", help="comma-separated worker counts")
    p.add_argument("--mode", choices=("strong", "weak"), default="strong")
    p.add_argument("--no-reference", action="store_true", help="skip theta tracking")
    _add_config_flags(p, skip=("n_workers", "reference"))

    p = sub.add_parser("theta", help="relative suboptimality (F_k - F*) / F*")
    p.add_argument("F_k", type=float)
    p.add_argument("F_star", type=float)

    sub.add_parser("schema", help="print the metrics JSON schema")
    return parser


def _cmd_reference(args):
    cfg = _config_from(args)
    train, _ = bench.load_data(cfg)
    ref = bench.compute_reference(train, cfg.lam, bench.reference_config(args.max_iters))
    bench.save_reference(args.out, ref)
    print(json.dumps({"objective": ref.objective, "grad_norm": ref.grad_norm,
                      "iterations": ref.iterations, "cg_iters": ref.cg_iters,
                      "n_train": train.n, "fingerprint": ref.fingerprint}))


def _cmd_train(args):
    cfg = _config_from(args)
    result = bench.run_experiment(cfg)
    print(json.dumps(result.summary, sort_keys=True))


def _cmd_sweep(args):
    try:
        counts = [int(c) for c in args.workers.split(",") if c.strip()]
    except ValueError:
        raise ConfigError(f"bad worker list {args.workers!r}") from None
    cfg = _config_from(args, output=None)
    table = bench.scaling_sweep(cfg, counts, args.mode, with_reference=not args.no_reference)
    out = args.output if hasattr(args, "output") else None
    fh = open(out, "w") if out else sys.stdout
    try:
        for row in table:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    finally:
        if out:
            fh.close()


def _cmd_theta(args):
    print(repr(bench.theta(args.F_k, args.F_star)))


def _cmd_schema(args):
    print(json.dumps(bench.METRICS_SCHEMA, indent=2))


_COMMANDS = {"reference": _cmd_reference, "train": _cmd_train, "sweep": _cmd_sweep,
             "theta": _cmd_theta, "schema": _cmd_schema}


def _threads():
    raw = os.environ.get("NEWTON_ADMM_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"NEWTON_ADMM_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("NEWTON_ADMM_THREADS must be >= 1")
    return n


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=_threads()):
            _COMMANDS[args.command](args)
    except (ConfigError, InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
