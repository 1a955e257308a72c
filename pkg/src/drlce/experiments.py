"""Synthetic benchmark: data generation, leave-one-out tuning and error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import kernel_regress, knn_mean, robust_knn, _KERNELS
from .locality import (
    MEMBERSHIP_RTOL,
    Dataset,
    GroundMetric,
    InfeasibleRadius,
    InputError,
    Query,
)
from .robust_loss import PaddedScenes, SquaredScalar, quantile_loss
from .solvers import SolverConfig, estimate, solve_padded

__all__ = [
    "METHODS",
    "SyntheticSpec",
    "HyperGrid",
    "CVResult",
    "EvalReport",
    "synthetic_inverse_cdf",
    "generate_synthetic",
    "loocv_predictions",
    "loocv_select",
    "predict",
    "type_p_deviation",
    "empirical_cdf",
    "evaluate",
    "run_synthetic_experiment",
]

METHODS = ("drce", "knn", "nw", "ne", "robustknn")


@dataclass(frozen=True)
class SyntheticSpec:
    """Piecewise-constant covariate density on [0, 1] with a ``sin(10 x)`` signal.

    The density is ``high`` on ``[0, lo_break] U [hi_break, 1]`` and ``low``
    in between.
    """

    N: int = 100
    seed: int = 0
    high: float = 100 / 72
    low: float = 30 / 72
    lo_break: float = 0.3
    hi_break: float = 0.7
    noise_var: float = 0.01

    def __post_init__(self):
        if self.N < 1:
            raise InputError("N must be positive")
        if not self.noise_var > 0:
            raise InputError("noise variance must be positive")
        if not math.isclose(sum(self.masses), 1.0, rel_tol=1e-12):
            raise InputError(f"plateau masses sum to {sum(self.masses)}, not 1")

    @property
    def masses(self) -> Tuple[float, float, float]:
        return (
            self.lo_break * self.high,
            (self.hi_break - self.lo_break) * self.low,
            (1 - self.hi_break) * self.high,
        )

    @staticmethod
    def signal(x):
        return np.sin(10 * np.asarray(x))


def synthetic_inverse_cdf(u, spec: SyntheticSpec = SyntheticSpec()):
    """Map uniforms on [0, 1) to covariates with the plateau density."""
    u = np.asarray(u, dtype=float)
    m1, m2, _ = spec.masses
    return np.where(
        u < m1,
        u / spec.high,
        np.where(
            u < m1 + m2,
            spec.lo_break + (u - m1) / spec.low,
            spec.hi_break + (u - m1 - m2) / spec.high,
        ),
    )


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    x = synthetic_inverse_cdf(rng.uniform(size=spec.N), spec)
    y = spec.signal(x) + rng.normal(0.0, math.sqrt(spec.noise_var), size=spec.N)
    return Dataset(x[:, None], y[:, None])


def _pow2(*exps):
    return tuple(0.0 if e is None else 2.0**e for e in exps)


@dataclass(frozen=True)
class HyperGrid:
    """Candidate hyperparameters per method."""

    k: Tuple[int, ...] = tuple(range(1, 11))
    h: Tuple[float, ...] = tuple(np.geomspace(0.005, 0.2, 15))
    gamma_rank: Tuple[float, ...] = (1, 1.3, 1.6, 2, 3, 5)
    rho_factor: Tuple[float, ...] = _pow2(None, -5, -4, -3, -2)
    theta: Tuple[float, ...] = (1.0,)
    rho_resp: Tuple[float, ...] = _pow2(None, -7, -6, -5, -4, -3, -2)

    def __post_init__(self):
        for name in ("k", "h", "gamma_rank", "rho_factor", "theta", "rho_resp"):
            vals = getattr(self, name)
            if len(vals) == 0:
                raise InputError(f"grid {name!r} is empty")
            object.__setattr__(self, name, tuple(float(v) if name != "k" else int(v) for v in vals))
        if min(self.k) < 1 or min(self.h) <= 0 or min(self.theta) <= 0:
            raise InputError("k >= 1, h > 0 and theta > 0 required")
        if min(self.gamma_rank) < 1 or min(self.rho_factor) < 0 or min(self.rho_resp) < 0:
            raise InputError("gamma ranks >= 1 and non-negative radii required")

    def candidates(self, method: str) -> List[dict]:
        """Grid points ordered from least to most complex (the tie-break order)."""
        if method == "knn":
            return [{"k": k} for k in sorted(self.k)]
        if method in ("nw", "ne"):
            return [{"h": h} for h in sorted(self.h, reverse=True)]
        if method == "robustknn":
            return [{"k": k, "rho": r} for r in sorted(self.rho_resp) for k in sorted(self.k)]
        if method == "drce":
            return [
                {"gamma_rank": g, "rho_factor": c, "theta": t}
                for c in sorted(self.rho_factor)
                for g in sorted(self.gamma_rank)
                for t in sorted(self.theta)
            ]
        raise InputError(f"unknown method {method!r}")


def _make_loss(loss: str, tau: float):
    # for "quantile", tau is the quantile level
    if loss == "mean":
        return SquaredScalar()
    if loss == "quantile":
        return quantile_loss(tau)
    raise InputError(f"loss must be 'mean' or 'quantile', got {loss!r}")


def _score(pred, truth, lossfn):
    return lossfn.value(np.asarray(truth)[:, None], np.asarray(pred)[:, None])


def _fold_tables(dataset: Dataset, metric: GroundMetric):
    D = metric.covariate(dataset.xs[:, None, :] - dataset.xs[None, :, :])
    np.fill_diagonal(D, np.inf)
    order = np.argsort(D, axis=1, kind="stable")[:, : dataset.N - 1]
    Ds = np.take_along_axis(D, order, axis=1)
    Ys = dataset.ys[order, 0]
    return D, Ds, Ys


def _padded(Ys, radii, inner, valid, reach):
    return PaddedScenes(Ys, radii, inner, valid, reach)


def _drce_fold_batch(Ds, Ys, rank, factor, theta):
    """Local scenes of every fold for one DRCE grid point (members are a distance prefix)."""
    lo = int(math.floor(rank))
    hi = int(math.ceil(rank))
    gamma = Ds[:, lo - 1] + (rank - lo) * (Ds[:, hi - 1] - Ds[:, lo - 1])
    rho = factor * gamma
    tol = MEMBERSHIP_RTOL * np.maximum(1.0, Ds)
    valid = Ds <= (rho + gamma)[:, None] + tol
    inner = valid & (Ds + rho[:, None] <= gamma[:, None] + tol)
    budgets = np.clip(rho[:, None] - np.maximum(0.0, Ds - gamma[:, None]), 0.0, rho[:, None])
    budgets = np.where(inner, rho[:, None], budgets)
    K = int(np.max(np.count_nonzero(valid, axis=1)))
    return _padded(Ys[:, :K], budgets[:, :K] / theta, inner[:, :K], valid[:, :K], rho / theta)


def loocv_predictions(
    dataset: Dataset,
    method: str,
    params: dict,
    metric: GroundMetric = None,
    loss: str = "mean",
    tau: float = 0.5,
    tolerance: float = 1e-8,
) -> np.ndarray:
    """Held-out prediction for every sample, fitting on the other ``N - 1``.

    Rows where the robust problem is infeasible come back as NaN.
    """
    if dataset.m != 1:
        raise InputError("cross-validation supports scalar responses only")
    if dataset.N < 2:
        raise InputError("leave-one-out needs at least two samples")
    metric = metric or GroundMetric()
    D, Ds, Ys = _fold_tables(dataset, metric)
    N = dataset.N
    lossfn = _make_loss(loss, tau)
    if method == "knn":
        k = int(params["k"])
        if k > N - 1:
            return np.full(N, np.nan)
        return Ys[:, :k].mean(axis=1)
    if method in ("nw", "ne"):
        W = _KERNELS[method](D / params["h"])
        total = W.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            pred = (W @ dataset.ys[:, 0]) / total
        return np.where(total > 0, pred, Ys[:, 0])
    if method == "robustknn":
        k = int(params["k"])
        if k > N - 1:
            return np.full(N, np.nan)
        r = float(params["rho"]) / metric.theta
        batch = _padded(
            Ys[:, :k], np.full((N, k), r), np.ones((N, k), bool), np.ones((N, k), bool),
            np.full(N, r),
        )
        return solve_padded(batch, lossfn, tolerance)
    if method == "drce":
        rank = float(params["gamma_rank"])
        if rank > N - 1:
            return np.full(N, np.nan)
        batch = _drce_fold_batch(Ds, Ys, rank, float(params["rho_factor"]), float(params["theta"]))
        return solve_padded(batch, lossfn, tolerance)
    raise InputError(f"unknown method {method!r}")


@dataclass
class CVResult:
    method: str
    best: dict
    scores: List[Tuple[dict, float]]


def loocv_select(
    dataset: Dataset,
    method: str,
    grid: HyperGrid = None,
    metric: GroundMetric = None,
    loss: str = "mean",
    tau: float = 0.5,
    tolerance: float = 1e-8,
) -> CVResult:
    """Pick the grid point with the smallest leave-one-out error.

    Ties go to the least complex candidate (see :meth:`HyperGrid.candidates`).
    A fold on which a candidate is infeasible is charged the squared range of
    that fold's responses.
    """
    grid = grid or HyperGrid()
    y = dataset.ys[:, 0]
    penalty = np.empty(dataset.N)
    for j in range(dataset.N):
        rest = np.delete(y, j)
        penalty[j] = (rest.max() - rest.min()) ** 2 if rest.size else 0.0
    lossfn = _make_loss(loss, tau)
    scores = []
    for params in grid.candidates(method):
        pred = loocv_predictions(dataset, method, params, metric, loss, tau, tolerance)
        err = _score(pred, y, lossfn)
        err = np.where(np.isnan(pred), penalty, err)
        scores.append((params, float(np.mean(err))))
    values = np.array([s for _, s in scores])
    best = values.min()
    pick = int(np.flatnonzero(values <= best + 1e-12 * max(1.0, abs(best)))[0])
    return CVResult(method, dict(scores[pick][0]), scores)


def predict(
    dataset: Dataset,
    x0,
    method: str,
    params: dict,
    metric: GroundMetric = None,
    loss: str = "mean",
    tau: float = 0.5,
    config: SolverConfig = None,
) -> float:
    """Scalar estimate at ``x0`` for any of :data:`METHODS`."""
    metric = metric or GroundMetric()
    lossfn = _make_loss(loss, tau)
    if method == "knn":
        return float(knn_mean(dataset, x0, metric, int(params["k"]))[0])
    if method in ("nw", "ne"):
        return float(kernel_regress(dataset, x0, metric, method, params["h"])[0])
    if method == "robustknn":
        return robust_knn(dataset, x0, metric, lossfn, int(params["k"]), params["rho"], config).beta
    if method == "drce":
        m = GroundMetric(metric.covariate_norm, metric.weights, metric.response_norm, params["theta"])
        q = Query(x0, gamma_rank=params["gamma_rank"], rho_factor=params["rho_factor"])
        return estimate(dataset, q, m, lossfn, config).beta
    raise InputError(f"unknown method {method!r}")


def type_p_deviation(errors, p: float) -> float:
    """``sqrt(2/p) * (mean |e|^p)^(1/p)``; equals the RMSE at ``p = 2``."""
    if not p > 0:
        raise InputError(f"p must be positive, got {p}")
    e = np.abs(np.asarray(errors, dtype=float).ravel())
    if e.size == 0:
        raise InputError("no errors given")
    return math.sqrt(2.0 / p) * float(np.mean(e**p)) ** (1.0 / p)


def empirical_cdf(errors, t):
    """Fraction of errors at most ``t`` (right-continuous step function)."""
    e = np.sort(np.asarray(errors, dtype=float).ravel())
    return np.searchsorted(e, np.asarray(t, dtype=float), side="right") / e.size


@dataclass
class EvalReport:
    """Errors of several methods at a set of query points over repeated runs.

    ``mae[method]`` has one entry per query point; ``pooled[method]`` holds the
    absolute errors at the query points inside the pooling window, over all
    runs; ``type_p[method]`` is aligned with ``ps``.
    """

    x0s: np.ndarray
    mae: Dict[str, np.ndarray]
    pooled: Dict[str, np.ndarray]
    ps: np.ndarray
    type_p: Dict[str, np.ndarray]
    window: Tuple[float, float]
    hyperparams: Dict[str, List[dict]] = field(default_factory=dict)

    def cdf(self, method: str, t):
        return empirical_cdf(self.pooled[method], t)

    def window_mae(self, method: str) -> float:
        """Mean absolute error averaged over the query points inside the window."""
        sel = _in_window(self.x0s, self.window)
        return float(np.mean(self.mae[method][sel]))


def _in_window(x0s, window):
    lo, hi = window
    return (x0s >= lo - 1e-9) & (x0s <= hi + 1e-9)


def evaluate(
    predictions: Dict[str, np.ndarray],
    truth,
    x0s,
    window: Tuple[float, float] = (0.28, 0.32),
    ps: Sequence[float] = (0.25, 0.5, 1.0, 2.0, 4.0),
) -> EvalReport:
    """Summarize predictions of shape (runs, len(x0s)) against the truth at each ``x0``."""
    x0s = np.asarray(x0s, dtype=float)
    if x0s.size == 0:
        raise InputError("no query points")
    truth = np.broadcast_to(np.asarray(truth, dtype=float), x0s.shape)
    sel = _in_window(x0s, window)
    mae, pooled, tp = {}, {}, {}
    ps = np.asarray(ps, dtype=float)
    for name, pred in predictions.items():
        err = np.abs(np.atleast_2d(np.asarray(pred, dtype=float)) - truth)
        mae[name] = err.mean(axis=0)
        pooled[name] = err[:, sel].ravel() if np.any(sel) else err.ravel()
        tp[name] = np.array([type_p_deviation(pooled[name], p) for p in ps])
    return EvalReport(x0s, mae, pooled, ps, tp, tuple(window))


def run_synthetic_experiment(
    runs: int = 100,
    N: int = 100,
    x0s: Sequence[float] = tuple(np.round(np.arange(0.20, 0.4001, 0.01), 2)),
    methods: Sequence[str] = METHODS,
    grid: HyperGrid = None,
    seed: int = 0,
    window: Tuple[float, float] = (0.28, 0.32),
    progress=None,
) -> EvalReport:
    """Repeat generate / tune / estimate ``runs`` times (run ``r`` uses seed ``seed + r``)."""
    grid = grid or HyperGrid()
    metric = GroundMetric(covariate_norm=1)
    x0s = np.asarray(x0s, dtype=float)
    preds = {m: np.empty((runs, x0s.size)) for m in methods}
    chosen = {m: [] for m in methods}
    for r in range(runs):
        data = generate_synthetic(SyntheticSpec(N=N, seed=seed + r))
        for m in methods:
            params = loocv_select(data, m, grid, metric).best
            chosen[m].append(params)
            for j, x0 in enumerate(x0s):
                preds[m][r, j] = predict(data, [x0], m, params, metric)
        if progress is not None:
            progress(r)
    report = evaluate(preds, SyntheticSpec.signal(x0s), x0s, window)
    report.hyperparams = chosen
    return report
