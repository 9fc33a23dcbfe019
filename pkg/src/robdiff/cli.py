"""Command-line front end: ``robdiff <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .asymptotics import ClosedFormOU, LongSimulation, s_matrix, theorem1_cov
from .contamination import ContaminationSpec, contaminate
from .divergence import DivergenceSpec
from .errors import DegeneratePathError, NumericalError
from .estimator import FitOptions, fit
from .experiment import load_config, run_experiment, write_report
from .influence import (ConditionalQuadrature, InfluenceRequest, StationarySimulation,
                        influence_curve, parse_grid)
from .sde import (Params, SimulationOptions, default_step, get_model, read_path_csv,
                  simulate_path, write_path_csv)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"{self.prog}: error: {message} (see --help)", file=sys.stderr)
        raise SystemExit(1)


def _emit(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _fmt(v, precision):
    return f"{v:.{precision}g}"


def _step(args, n):
    return args.h if args.h is not None else default_step(n, args.h_exponent)


def cmd_simulate(args):
    model = get_model(args.model)
    opts = SimulationOptions(args.substeps, args.burn_in, args.x0, args.stationary)
    path = simulate_path(model, Params(args.mu, args.sigma), args.n, _step(args, args.n),
                         opts, args.seed)
    _emit(write_path_csv(path), args.out)


def cmd_contaminate(args):
    path = read_path_csv(args.input)
    spec = ContaminationSpec(args.kind, args.epsilon, args.sigma_z2, args.seed)
    _emit(write_path_csv(contaminate(path, spec)), args.out)


def cmd_fit(args):
    model = get_model(args.model)
    raw = read_path_csv(args.input)
    h = _step(args, raw.n)
    if raw.n >= 1 and abs(raw.h - h) > 1e-9 * h and args.h is None:
        print(f"warning: time column spacing {raw.h:.6g} differs from h={h:.6g}; "
              "pass --h to override", file=sys.stderr)
    path = raw.__class__(raw.n, h, raw.values, raw.seed)
    bounds = ((args.mu_lo, args.mu_hi), (args.sigma_lo, args.sigma_hi))
    res = fit(path, model, DivergenceSpec(args.family, args.lam),
              FitOptions(bounds=bounds, multistart=args.multistart))
    p = args.precision
    if args.format == "csv":
        cols = ["mu_hat", "sigma_hat", "objective", "iterations", "converged", "grad_norm",
                "at_boundary"]
        vals = [_fmt(res.theta_hat.mu, p), _fmt(res.theta_hat.sigma, p),
                _fmt(res.objective_value, p), str(res.iterations), str(res.converged).lower(),
                _fmt(res.grad_norm, p), str(res.at_boundary).lower()]
        text = ",".join(cols) + "\n" + ",".join(vals) + "\n"
    else:
        text = (f"mu_hat     {_fmt(res.theta_hat.mu, p)}\n"
                f"sigma_hat  {_fmt(res.theta_hat.sigma, p)}\n"
                f"objective  {_fmt(res.objective_value, p)}\n"
                f"iterations {res.iterations}\n"
                f"converged  {res.converged}\n"
                f"grad_norm  {_fmt(res.grad_norm, p)}\n"
                f"boundary   {res.at_boundary}\n")
    _emit(text, args.out)


def cmd_influence(args):
    model = get_model(args.model)
    h = _step(args, args.n)
    x_prev = h if args.x_prev is None else args.x_prev
    if args.method == "quadrature":
        method = ConditionalQuadrature(args.nodes)
    else:
        method = StationarySimulation(args.path_length, args.seed)
    req = InfluenceRequest(model, Params(args.mu, args.sigma),
                           DivergenceSpec(args.family, args.lam), h, x_prev,
                           tuple(parse_grid(args.grid)), method)
    _emit(influence_curve(req).to_csv(args.precision), args.out)


def cmd_asympt(args):
    model = get_model(args.model)
    theta0 = Params(args.mu0, args.sigma0)
    if args.source == "closed-form":
        source = ClosedFormOU()
    else:
        source = LongSimulation(args.length, args.seed)
    s = s_matrix(model, theta0, source)
    cov = theorem1_cov(args.gamma, args.sigma0, s)
    p = args.precision
    _emit("gamma,sigma0,S,var_mu,var_sigma\n"
          f"{_fmt(args.gamma, p)},{_fmt(args.sigma0, p)},{_fmt(s.s_value, p)},"
          f"{_fmt(cov.var_mu, p)},{_fmt(cov.var_sigma, p)}\n", args.out)


def cmd_experiment(args):
    config = load_config(args.config)
    overrides = {}
    if args.reps is not None:
        overrides["reps"] = args.reps
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if overrides:
        config = config.__class__.from_dict({**config.to_dict(), **overrides})
    report = run_experiment(config, threads=args.threads)
    for dest in write_report(report, config, args.out, args.precision):
        print(dest)


def _add_step_flags(p):
    p.add_argument("--h", type=float, default=None,
                   help="observation step")
    p.add_argument("--h-exponent", type=float, default=0.55,
                   help="exponent of the default step rule h = n^-e")


def _add_spec_flags(p):
    p.add_argument("--family", default="gamma", choices=["gamma", "density-power", "dp"],
                   help="divergence family")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="tuning parameter; 0 gives the quasi-likelihood")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robdiff", description=__doc__,
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("simulate", help="simulate a clean path", formatter_class=fmt)
    p.add_argument("--model", default="A", help="model A or B")
    p.add_argument("--mu", type=float, default=1.0, help="drift parameter")
    p.add_argument("--sigma", type=float, default=1.0, help="diffusion parameter")
    p.add_argument("--n", type=int, default=500, help="number of increments")
    _add_step_flags(p)
    p.add_argument("--substeps", type=int, default=10, help="Euler steps per observation")
    p.add_argument("--burn-in", type=int, default=1000, help="discarded internal steps")
    p.add_argument("--x0", type=float, default=0.0, help="initial state")
    p.add_argument("--stationary", action="store_true",
                   help="draw x0 from the OU stationary law (model A only)")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("contaminate", help="inject AO/RO outliers into a path", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="input path CSV")
    p.add_argument("--kind", default="ao", choices=["ao", "ro", "none"], help="outlier mechanism")
    p.add_argument("--epsilon", type=float, default=0.05, help="outlier probability")
    p.add_argument("--sigma-z2", type=float, default=1.0, help="outlier variance")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    p.set_defaults(func=cmd_contaminate)

    p = sub.add_parser("fit", help="fit (mu, sigma) to a path", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="input path CSV")
    p.add_argument("--model", default="A", help="model A or B")
    _add_spec_flags(p)
    _add_step_flags(p)
    p.add_argument("--mu-lo", type=float, default=0.01, help="lower bound for mu")
    p.add_argument("--mu-hi", type=float, default=10.0, help="upper bound for mu")
    p.add_argument("--sigma-lo", type=float, default=0.01, help="lower bound for sigma")
    p.add_argument("--sigma-hi", type=float, default=10.0, help="upper bound for sigma")
    p.add_argument("--multistart", type=int, default=3, help="number of starting points")
    p.add_argument("--format", default="csv", choices=["csv", "text"], help="output format")
    p.add_argument("--precision", type=int, default=6, help="significant digits")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("influence", help="conditional influence curves", formatter_class=fmt)
    p.add_argument("--model", default="A", help="model A or B")
    p.add_argument("--mu", type=float, default=1.0, help="true drift parameter")
    p.add_argument("--sigma", type=float, default=1.0, help="true diffusion parameter")
    _add_spec_flags(p)
    p.add_argument("--n", type=int, default=100, help="sample size setting the default step")
    _add_step_flags(p)
    p.add_argument("--x-prev", type=float, default=None,
                   help="conditioning value x_{i-1}")
    p.add_argument("--grid", default="-50:50:1001", help="evaluation grid lo:hi:count")
    p.add_argument("--method", default="quadrature", choices=["quadrature", "simulation"],
                   help="how the D matrix expectation is taken")
    p.add_argument("--nodes", type=int, default=64, help="Gauss-Hermite nodes")
    p.add_argument("--path-length", type=int, default=100_000,
                   help="path length for --method simulation")
    p.add_argument("--seed", type=int, default=0, help="random seed for --method simulation")
    p.add_argument("--precision", type=int, default=6, help="significant digits")
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("asympt", help="asymptotic covariance of the gamma estimator",
                       formatter_class=fmt)
    p.add_argument("--gamma", type=float, default=0.0, help="gamma tuning parameter")
    p.add_argument("--mu0", type=float, default=1.0, help="true drift parameter")
    p.add_argument("--sigma0", type=float, default=1.0, help="true diffusion parameter")
    p.add_argument("--model", default="A", help="model A or B")
    p.add_argument("--source", default="closed-form", choices=["closed-form", "simulation"],
                   help="how the stationary drift information S is computed")
    p.add_argument("--length", type=int, default=1_000_000, help="path length for simulation")
    p.add_argument("--seed", type=int, default=0, help="random seed for simulation")
    p.add_argument("--precision", type=int, default=6, help="significant digits")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.set_defaults(func=cmd_asympt)

    p = sub.add_parser("experiment", help="Monte Carlo bias/MSE tables", formatter_class=fmt)
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--reps", type=int, default=None, help="override replications")
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker processes (results do not depend on this)")
    p.add_argument("--precision", type=int, default=6, help="significant digits")
    p.set_defaults(func=cmd_experiment)
    return parser


def _join_grid(argv):
    # argparse would read a grid such as "-5:5:11" as a flag
    argv = list(argv)
    for i, tok in enumerate(argv[:-1]):
        if tok == "--grid":
            argv[i:i + 2] = [f"--grid={argv[i + 1]}"]
            break
    return argv


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_grid(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except (NumericalError, DegeneratePathError, np.linalg.LinAlgError) as exc:
        print(f"robdiff {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"robdiff {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
