"""Command-line entry points: ``drlce {estimate,synth,cv,experiment,check}``.

Settings come from three layers, later ones winning: built-in defaults, the
JSON object given by ``--config``, then explicit flags.

Exit codes: 0 success, 1 input error (or a failed ``check``), 2 when some
``estimate`` queries were infeasible (their records are still written).
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import experiments as ex
from .baselines import kernel_regress, knn_mean, robust_knn
from .checks import run_checks
from .io import RunConfig, format_number, load_config, load_csv, write_csv, write_dataset
from .locality import GroundMetric, InfeasibleRadius, InputError, Query, covariate_distances
from .robust_loss import SquaredScalar, SquaredVector, quantile_loss
from .solvers import estimate

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2


def _floats(text):
    try:
        return [float(t) for t in str(text).split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    a = common.add_argument
    a("--config", help="JSON object of settings (flags override it)")
    a("--data", help="CSV file: x_1..x_n then y_1..y_m")
    a("--header", action="store_true", help="CSV has a header row")
    a("--xdim", type=int)
    a("--ydim", type=int)
    a("--x0", type=_floats, action="append", help="query point, comma-separated; repeatable")
    g = common.add_mutually_exclusive_group()
    g.add_argument("--gamma", type=float)
    g.add_argument("--gamma-rank", dest="gamma_rank", type=float)
    g = common.add_mutually_exclusive_group()
    g.add_argument("--rho", type=float, help="transport budget (robustknn: response budget)")
    g.add_argument("--rho-factor", dest="rho_factor", type=float, help="rho as a multiple of gamma")
    a("--loss", choices=["mean", "quantile", "vecmean2", "vecmeaninf"])
    a("--tau", type=float, help="quantile level for --loss quantile")
    a("--theta", type=float)
    a("--covariate-norm", dest="covariate_norm", choices=["1", "2", "inf"])
    a("--method", choices=list(ex.METHODS))
    a("--k", type=int, help="neighbors for knn / robustknn")
    a("--h", type=float, help="bandwidth for nw / ne")
    a("--seed", type=int)
    a("--n-samples", dest="n_samples", type=int)
    a("--runs", type=int)
    a("--out", help="output file (estimate, synth, cv) or directory (experiment)")

    p = argparse.ArgumentParser(prog="drlce", description="Distributionally robust local estimation.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("estimate", parents=[common], help="estimate at query points")
    sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    sub.add_parser("cv", parents=[common], help="leave-one-out hyperparameter selection")
    sub.add_parser("experiment", parents=[common], help="repeated synthetic benchmark")
    c = sub.add_parser("check", parents=[common], help="compare against brute-force oracles")
    c.add_argument("--scale", type=float, default=1.0, help="multiplier on instance counts")
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg.update(load_config(args.config), source=args.config)
    names = {f.name for f in fields(RunConfig)}
    flags = {k: v for k, v in vars(args).items() if k in names}
    # a flag for one of a pair of alternatives replaces the config's choice
    for a, b in (("gamma", "gamma_rank"), ("rho", "rho_factor")):
        if a in flags:
            flags.setdefault(b, None)
        elif b in flags:
            flags.setdefault(a, None)
    return cfg.update(flags, source="command line")


def _metric(cfg: RunConfig, theta=None) -> GroundMetric:
    resp = "inf" if cfg.loss == "vecmeaninf" else "2"
    return GroundMetric(covariate_norm=cfg.covariate_norm, response_norm=resp,
                        theta=cfg.theta if theta is None else theta)


def _loss(cfg: RunConfig):
    if cfg.loss in ("mean", "quantile") and cfg.ydim != 1:
        raise InputError(f"loss {cfg.loss!r} needs ydim = 1; use vecmean2 or vecmeaninf")
    if cfg.loss == "mean":
        return SquaredScalar()
    if cfg.loss == "quantile":
        return quantile_loss(cfg.tau)
    return SquaredVector("2" if cfg.loss == "vecmean2" else "inf")


def _dataset(cfg: RunConfig):
    if cfg.data is None:
        raise InputError("--data is required")
    return load_csv(cfg.data, cfg.xdim, cfg.ydim, header=cfg.header)


def _emit(path, header, rows):
    write_csv(sys.stdout if path is None else path, header, rows)


def _need(value, flag, method):
    if value is None:
        raise InputError(f"method {method} needs {flag}")
    return value


def cmd_estimate(cfg: RunConfig) -> int:
    data = _dataset(cfg)
    if not cfg.x0:
        raise InputError("give at least one --x0")
    loss = _loss(cfg)
    metric = _metric(cfg)
    header = ([f"x0_{j + 1}" for j in range(data.n)] + ["method"]
              + [f"beta_{j + 1}" for j in range(data.m)]
              + ["f", "n_members", "n_inner", "gamma", "rho", "iterations", "status", "min_kappa"])
    rows, code = [], EXIT_OK
    nan_beta = [math.nan] * data.m
    for x0 in cfg.x0:
        x0 = np.asarray(x0, dtype=float)
        m = cfg.method
        if m == "drce":
            if cfg.gamma is None and cfg.gamma_rank is None:
                raise InputError("drce needs --gamma or --gamma-rank")
            if cfg.rho is None and cfg.rho_factor is None:
                raise InputError("drce needs --rho or --rho-factor")
            q = Query(x0, gamma=cfg.gamma, gamma_rank=cfg.gamma_rank, rho=cfg.rho, rho_factor=cfg.rho_factor)
            try:
                sol = estimate(data, q, metric, loss)
            except InfeasibleRadius as e:
                rows.append([*x0, m, *nan_beta, math.nan, 0, 0, e.gamma, e.rho, 0, "infeasible", e.min_kappa])
                code = EXIT_INFEASIBLE
                continue
            sc = sol.scene
            status = "ok" if sol.converged else "max_iterations"
            rows.append([*x0, m, *sol.beta_star, sol.f_star, sc.size, sc.n_inner, sc.gamma, sc.rho,
                         sol.iterations, status, sc.min_kappa])
        elif m == "robustknn":
            k = _need(cfg.k, "--k", m)
            rho = _need(cfg.rho, "--rho", m)
            sol = robust_knn(data, x0, metric, loss, k, rho)
            status = "ok" if sol.converged else "max_iterations"
            rows.append([*x0, m, *sol.beta_star, sol.f_star, k, k, sol.scene.gamma, rho,
                         sol.iterations, status, 0.0])
        else:
            if cfg.loss == "quantile":
                raise InputError(f"method {m} estimates means only")
            d = np.sort(covariate_distances(data, x0, metric))
            if m == "knn":
                k = _need(cfg.k, "--k", m)
                est = knn_mean(data, x0, metric, k)
                rows.append([*x0, m, *est, math.nan, k, k, d[min(k, data.N) - 1], 0.0, 0, "ok", 0.0])
            else:
                h = _need(cfg.h, "--h", m)
                est, fb = kernel_regress(data, x0, metric, "nw" if m == "nw" else "ne", h, return_fallback=True)
                used = int(np.count_nonzero(d < h)) if m == "ne" else data.N
                rows.append([*x0, m, *est, math.nan, used, used, h, 0.0, 0,
                             "nearest_fallback" if fb else "ok", 0.0])
    _emit(cfg.out, header, rows)
    return code


def cmd_synth(cfg: RunConfig) -> int:
    data = ex.generate_synthetic(ex.SyntheticSpec(N=cfg.n_samples, seed=cfg.seed))
    write_dataset(sys.stdout if cfg.out is None else cfg.out, data)
    return EXIT_OK


def _grid(cfg: RunConfig) -> ex.HyperGrid:
    return ex.HyperGrid(**cfg.grid) if cfg.grid else ex.HyperGrid()


def cmd_cv(cfg: RunConfig) -> int:
    if cfg.data is not None:
        data = _dataset(cfg)
    else:
        data = ex.generate_synthetic(ex.SyntheticSpec(N=cfg.n_samples, seed=cfg.seed))
    loss = "quantile" if cfg.loss == "quantile" else "mean"
    if cfg.loss not in ("mean", "quantile"):
        raise InputError("cv supports the mean and quantile losses")
    res = ex.loocv_select(data, cfg.method, _grid(cfg), _metric(cfg), loss, cfg.tau)
    keys = list(res.scores[0][0])
    rows = [[*(p[k] for k in keys), s, int(p == res.best)] for p, s in res.scores]
    _emit(cfg.out, [*keys, "cv_loss", "selected"], rows)
    best = ", ".join(f"{k}={format_number(v)}" for k, v in res.best.items())
    print(f"{cfg.method}: selected {best}", file=sys.stderr)
    return EXIT_OK


def cmd_experiment(cfg: RunConfig) -> int:
    out = Path(cfg.out or "experiment_out")
    out.mkdir(parents=True, exist_ok=True)
    methods = ex.METHODS

    def progress(r):
        print(f"run {r + 1}/{cfg.runs}", file=sys.stderr)

    rep = ex.run_synthetic_experiment(runs=cfg.runs, N=cfg.n_samples, methods=methods, grid=_grid(cfg),
                                      seed=cfg.seed, window=tuple(cfg.window), progress=progress)
    write_csv(out / "mae.csv", ["x0", *methods], [[x, *(rep.mae[m][j] for m in methods)]
                                                  for j, x in enumerate(rep.x0s)])
    top = max(float(np.max(rep.pooled[m])) for m in methods)
    ts = np.linspace(0.0, top, 201)
    write_csv(out / "error_cdf.csv", ["error", *methods], [[t, *(rep.cdf(m, t) for m in methods)] for t in ts])
    write_csv(out / "type_p.csv", ["p", *methods], [[p, *(rep.type_p[m][i] for m in methods)]
                                                   for i, p in enumerate(rep.ps)])
    keys = sorted({k for m in methods for p in rep.hyperparams[m] for k in p})
    hp = [[r, m, *(p.get(k, "") for k in keys)] for m in methods for r, p in enumerate(rep.hyperparams[m])]
    write_csv(out / "hyperparams.csv", ["run", "method", *keys], hp)
    for m in methods:
        print(f"{m:10s} window MAE {rep.window_mae(m):.6f}")
    return EXIT_OK


def cmd_check(cfg: RunConfig, scale: float = 1.0) -> int:
    def report(r):
        flag = "PASS" if r.passed else "FAIL"
        print(f"{flag}  {r.name}: worst {r.worst:.3e} (tol {r.tolerance:g}, {r.instances} instances)")

    results = run_checks(seed=cfg.seed, scale=scale, report=report)
    return EXIT_OK if all(r.passed for r in results) else EXIT_INPUT


COMMANDS = {"estimate": cmd_estimate, "synth": cmd_synth, "cv": cmd_cv, "experiment": cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "check":
            return cmd_check(cfg, args.scale)
        return COMMANDS[args.command](cfg)
    except (InputError, InfeasibleRadius, OSError) as e:
        print(f"drlce {args.command}: error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
