"""Brute-force reference computations on small random instances.

Each oracle reaches its answer by a different route than the library code
(enumeration, sampling plus local refinement, direct search) so that
agreement is evidence of correctness. :func:`run_checks` bundles them into
the report printed by ``drlce check``.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, List, NamedTuple

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .locality import Dataset, GroundMetric, InfeasibleRadius, Query, build_local_scene
from .robust_loss import Pinball, SquaredScalar, SquaredVector, select_alpha, worst_case_loss
from .solvers import chebyshev_closed_form, solve_scene

__all__ = [
    "CheckResult",
    "enumerate_ratio",
    "sampled_inner_max",
    "enumerated_worst_case",
    "random_scene",
    "run_checks",
]


class CheckResult(NamedTuple):
    name: str
    passed: bool
    worst: float
    tolerance: float
    instances: int


def enumerate_ratio(values, inner) -> float:
    """Best ratio over every binary participation mask of the ring."""
    v = np.asarray(values, dtype=float)
    inner = np.asarray(inner, dtype=bool)
    ring = np.flatnonzero(~inner)
    c, d = v[inner].sum(), int(inner.sum())
    best = -math.inf
    for bits in itertools.product((0, 1), repeat=ring.size):
        sel = ring[np.array(bits, dtype=bool)] if ring.size else ring
        if d + sel.size == 0:
            continue
        best = max(best, (c + v[sel].sum()) / (d + sel.size))
    return best


def _sphere(m, angles):
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        return np.stack([np.cos(angles[..., 0]), np.sin(angles[..., 0])], axis=-1)
    t, p = angles[..., 0], angles[..., 1]
    return np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1)


def sampled_inner_max(loss, yhat, r, beta, grid: int = 400) -> float:
    """Max of the loss over the response ball, by boundary sampling and refinement.

    Scalar losses sample the clipped interval ``[max(a, yhat - r), min(b, yhat + r)]``
    on a grid that includes both ends. The 2-ball samples the sphere on an
    angular grid and polishes the best samples with a local search; the
    infinity-ball enumerates the box corners next to a coarse interior grid.
    """
    yhat = np.atleast_1d(np.asarray(yhat, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    m = yhat.size
    if isinstance(loss, (SquaredScalar, Pinball)):
        lo, hi = max(loss.a, yhat[0] - r), min(loss.b, yhat[0] + r)
        ys = np.linspace(lo, hi, grid + 1)[:, None]
        return float(np.max(loss.value(ys, beta)))
    if loss.ball == "inf" or m == 1:
        corners = yhat + r * np.array(list(itertools.product((-1.0, 1.0), repeat=m)))
        g = np.linspace(-r, r, 5)
        interior = yhat + np.array(list(itertools.product(g, repeat=m)))
        return float(np.max(loss.value(np.vstack([corners, interior]), beta)))

    def val(angles):
        return float(loss.value(yhat + r * _sphere(m, np.asarray(angles)), beta))

    if m == 2:
        th = np.linspace(0, 2 * np.pi, grid, endpoint=False)[:, None]
    else:
        k = int(math.sqrt(grid * 10))
        t, p = np.meshgrid(np.linspace(0, np.pi, k), np.linspace(0, 2 * np.pi, 2 * k))
        th = np.stack([t.ravel(), p.ravel()], axis=1)
    vals = loss.value(yhat + r * _sphere(m, th), beta)
    best = float(np.max(vals))
    for j in np.argsort(vals)[-3:]:
        if m == 2:
            res = minimize_scalar(
                lambda a: -val([a]), bracket=(th[j, 0] - 0.05, th[j, 0] + 0.05),
                options={"xtol": 1e-12},
            )
            best = max(best, -float(res.fun))
        else:
            res = minimize(lambda a: -val(a), th[j], method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
            best = max(best, -float(res.fun))
    return best


def enumerated_worst_case(scene, loss, beta) -> float:
    """``f(beta)`` from sampled inner maxima and mask enumeration (no greedy)."""
    v = [sampled_inner_max(loss, y, r, beta) for y, r in zip(scene.responses, scene.radii)]
    return enumerate_ratio(v, scene.inner)


def random_scene(rng, n=1, m=1, N=None, response_norm=2, gamma=None, rho=None):
    """Random small dataset and a feasible local scene around the origin."""
    while True:
        N_ = N or int(rng.integers(1, 9))
        data = Dataset(rng.uniform(-1, 1, (N_, n)), rng.uniform(0, 1, (N_, m)))
        metric = GroundMetric(covariate_norm=2, response_norm=response_norm,
                              theta=float(rng.choice([0.5, 1.0, 2.0])))
        q = Query(np.zeros(n), gamma=gamma if gamma is not None else float(rng.uniform(0, 0.8)),
                  rho=rho if rho is not None else float(rng.uniform(0, 0.5)))
        try:
            return data, metric, build_local_scene(data, q, metric)
        except InfeasibleRadius:
            continue


def _worst(values) -> float:
    return float(max(values)) if len(values) else 0.0


def _check_select_alpha(rng, count):
    errs = []
    for _ in range(count):
        K = int(rng.integers(1, 13))
        v = rng.uniform(0, 10, K)
        inner = rng.random(K) < rng.random()
        errs.append(abs(select_alpha(v, inner)[1] - enumerate_ratio(v, inner)))
    return _worst(errs)


def _random_loss(rng, m):
    if m == 1:
        kind = int(rng.integers(3))
        a, b = sorted(rng.uniform(-0.5, 1.5, 2))
        a, b = (a, b) if rng.random() < 0.5 else (-math.inf, math.inf)
        if kind == 0:
            return SquaredScalar(a, b), None
        if kind == 1:
            return Pinball(float(rng.uniform(0.05, 0.95)), a, b), None
    ball = str(rng.choice(["2", "inf"]))
    return SquaredVector(ball), ball


def _check_v_star(rng, count):
    errs = []
    for _ in range(count):
        m = int(rng.integers(1, 4))
        loss, _ = _random_loss(rng, m)
        yhat = rng.uniform(0, 1, m)
        if isinstance(loss, (SquaredScalar, Pinball)) and math.isfinite(loss.a):
            yhat = np.clip(yhat, loss.a, loss.b)
        r = float(rng.uniform(0, 0.5))
        beta = rng.uniform(-0.5, 1.5, m)
        got = float(loss.v_star(yhat[None, :], np.array([r]), beta)[0])
        ref = sampled_inner_max(loss, yhat, r, beta)
        errs.append(abs(got - ref))
    return _worst(errs)


def _check_f(rng, count):
    errs = []
    for _ in range(count):
        m = int(rng.integers(1, 3))
        ball = str(rng.choice(["2", "inf"]))
        data, metric, scene = random_scene(rng, m=m, response_norm=2 if ball == "2" else np.inf)
        loss = SquaredScalar() if m == 1 else SquaredVector(ball)
        beta = rng.uniform(-0.5, 1.5, m)
        errs.append(abs(worst_case_loss(scene, loss, beta).f_value - enumerated_worst_case(scene, loss, beta)))
    return _worst(errs)


def _check_chebyshev(rng, count):
    errs = []
    for _ in range(count):
        data, metric, scene = random_scene(rng, gamma=0.0, rho=float(rng.uniform(0.3, 1.5)))
        if scene.theta != 1:
            metric = GroundMetric(theta=1.0)
            scene = build_local_scene(data, Query(scene.x0, gamma=0.0, rho=scene.rho), metric)
        beta, *_ = solve_scene(scene, SquaredScalar())
        errs.append(abs(beta[0] - chebyshev_closed_form(scene)))
    return _worst(errs)


def _check_minimizer(rng, count):
    errs = []
    for _ in range(count):
        data, metric, scene = random_scene(rng)
        loss = SquaredScalar() if rng.random() < 0.5 else Pinball(float(rng.uniform(0.1, 0.9)))
        beta, f, *_ = solve_scene(scene, loss)
        res = minimize_scalar(lambda b: worst_case_loss(scene, loss, b).f_value,
                              bounds=(-1.0, 2.0), method="bounded", options={"xatol": 1e-12})
        errs.append(max(0.0, f - min(res.fun, worst_case_loss(scene, loss, res.x).f_value)))
    return _worst(errs)


CHECKS: List[tuple] = [
    ("select_alpha vs mask enumeration", _check_select_alpha, 1e-10, 1000),
    ("v* closed forms vs boundary sampling", _check_v_star, 1e-5, 500),
    ("f(beta) vs sampled maxima + enumeration", _check_f, 1e-5, 100),
    ("golden section vs hull centre (gamma = 0)", _check_chebyshev, 1e-6, 100),
    ("scalar minimizer vs bounded search", _check_minimizer, 1e-8, 100),
]


def run_checks(seed: int = 0, scale: float = 1.0, report: Callable = None) -> List[CheckResult]:
    """Run every oracle comparison; ``scale`` multiplies the instance counts."""
    results = []
    for name, fn, tol, count in CHECKS:
        rng = np.random.default_rng(seed)
        n = max(1, int(round(count * scale)))
        worst = fn(rng, n)
        res = CheckResult(name, worst <= tol, worst, tol, n)
        results.append(res)
        if report is not None:
            report(res)
    return results
