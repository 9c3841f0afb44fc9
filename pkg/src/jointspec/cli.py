"""Command-line interface: ``simulate``, ``fit``, ``test``, ``mc`` and ``apply``.

Exit codes: 0 on success, 2 for configuration errors, 3 for data or model
errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .errors import ConfigError, DataError
from .models import DGP_KINDS, SDE_DGPS, DgpSpec, get_model, model_names, simulate_dgp

log = logging.getLogger("jointspec")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def read_series(path: str) -> np.ndarray:
    """Single-column CSV, optional header, one observation per line."""
    values = []
    try:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                if not row or not row[0].strip():
                    continue
                try:
                    values.append(float(row[0]))
                except ValueError:
                    if values or lineno > 1:
                        raise DataError(f"{path}:{lineno}: not a number: {row[0]!r}")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}")
    if not values:
        raise DataError(f"{path}: no observations")
    return np.array(values)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _engine_list(s: str) -> tuple:
    return tuple(e.strip() for e in s.split(",") if e.strip())


def _params(args):
    from .harness import EngineParams

    return EngineParams(
        _engine_list(args.engines), args.B, args.m, args.bandwidth_c, args.x0_quantile
    )


def _parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        try:
            out[key] = float(val)
        except ValueError:
            raise ConfigError(f"--param {key}: not a number: {val!r}")
    return out


def cmd_simulate(args) -> int:
    if args.dgp not in DGP_KINDS or args.dgp == "model":
        raise ConfigError(f"unknown DGP {args.dgp!r}")
    if args.dgp in SDE_DGPS and args.delta is None:
        raise ConfigError(f"DGP {args.dgp} needs --delta")
    dgp = DgpSpec(args.dgp, _parse_overrides(args.param), burnin=args.burnin, delta=args.delta,
                  x0=args.x0)
    x = simulate_dgp(dgp, args.n, args.seed)
    _emit("".join(f"{v:.17g}\n" for v in x), args.out)
    return EXIT_OK


def _model(args):
    return get_model(args.model, args.delta)


def cmd_fit(args) -> int:
    from .estimation import influence, qmle_fit

    x = read_series(args.data)
    model = _model(args)
    fit = qmle_fit(model, x, seed=args.seed)
    out = {
        "model": model.name,
        "theta_hat": fit.theta_hat.as_dict(),
        "loglik": fit.loglik,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "hessian": fit.hessian.tolist(),
    }
    if fit.converged:
        out["sigma0"] = influence(model, fit, x).sigma0.tolist()
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_test(args) -> int:
    from .harness import run_test, validate_report

    x = read_series(args.data)
    report = run_test(x, _model(args), _params(args), args.seed)
    validate_report(report)
    _emit(report.to_json(indent=2) + "\n", args.out)
    if report.error:
        log.error("test failed: %s", report.error)
        return EXIT_DATA
    return EXIT_OK


def cmd_mc(args) -> int:
    from .harness import ExperimentConfig, run_experiment

    rows = tuple(r.strip() for r in args.dgp.split(",")) if args.dgp else None
    cfg = ExperimentConfig(
        experiment=args.experiment, n=args.n, reps=args.reps, engines=_engine_list(args.engines),
        B=args.B, m=args.m, bandwidth_c=args.bandwidth_c, x0_quantile=args.x0_quantile,
        level=args.level, master_seed=args.seed, rows=rows, delta=args.delta,
        workers=args.workers,
    )
    result = run_experiment(cfg)
    _emit(result.table(), args.out)
    failed = result.failed_rows
    if failed:
        log.error("more than 2%% of replications excluded in rows %s", ", ".join(failed))
        return EXIT_DATA
    return EXIT_OK


def cmd_apply(args) -> int:
    from .harness import run_application

    x = read_series(args.data)
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    report = run_application(x, args.delta, models, _params(args), args.seed)
    _emit(report.table(), args.out)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({m: r.to_dict() for m, r in report.reports.items()}, fh, indent=2)
    return EXIT_OK


def _add_engine_flags(p, B_default=500):
    p.add_argument("--engines", default="transform,bootstrap,numeric",
                   help="comma-separated subset of transform,bootstrap,numeric")
    p.add_argument("--B", type=int, default=B_default, help="bootstrap draws")
    p.add_argument("--m", type=int, default=100, help="quadrature nodes")
    p.add_argument("--bandwidth-c", type=float, default=1.0,
                   help="constant c in the bandwidth c * sd * n^(-1/5)")
    p.add_argument("--x0-quantile", type=float, default=0.95, help="truncation quantile")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jointspec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a data-generating process")
    p.add_argument("--dgp", required=True, help=f"one of {', '.join(k for k in DGP_KINDS if k != 'model')}")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, help="Euler mesh for diffusion DGPs")
    p.add_argument("--burnin", type=int)
    p.add_argument("--x0", type=float, help="starting value")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="override a DGP constant, e.g. a1=0.5")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    for name, func, help_ in (("fit", cmd_fit, "QMLE fit of a model"),
                              ("test", cmd_test, "joint specification test")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--model", required=True, help=f"one of {', '.join(model_names())} or D1..D7")
        p.add_argument("--data", required=True, help="single-column CSV")
        p.add_argument("--delta", type=float, help="sampling interval for diffusion models")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out")
        if name == "test":
            _add_engine_flags(p)
            p.add_argument("--level", type=float, default=0.05)
        p.set_defaults(func=func)

    p = sub.add_parser("mc", help="Monte Carlo rejection-rate table")
    p.add_argument("--experiment", required=True,
                   help="arch1, garch11, ar1garch, sde_vasicek_null or sde_cir_null")
    p.add_argument("--model", help="accepted for symmetry; the experiment fixes the null model")
    p.add_argument("--dgp", help="comma-separated subset of rows")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, help="Euler mesh (default 1/n for diffusion experiments)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    _add_engine_flags(p)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("apply", help="test candidate diffusion models on one series")
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=float, required=True, help="sampling interval")
    p.add_argument("--models", default="D1,D2,D3,D4,D5,D6,D7")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--json", help="also write the per-model reports as JSON")
    _add_engine_flags(p, B_default=2000)
    p.set_defaults(func=cmd_apply)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if getattr(args, "model", None) and args.command == "mc":
        log.info("--model is ignored by mc; the experiment fixes the null model")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
