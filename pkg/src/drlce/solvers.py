"""Minimizers of the worst-case loss and the end-to-end estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .locality import (
    Dataset,
    GroundMetric,
    InputError,
    LocalScene,
    Query,
    build_local_scene,
)
from .robust_loss import (
    PaddedScenes,
    Pinball,
    SquaredScalar,
    SquaredVector,
    WorstCaseDistribution,
    _check_loss,
    _subgradient_from_eval,
    worst_case_distribution,
    worst_case_loss,
)

__all__ = [
    "GOLDEN_RATIO",
    "SolverConfig",
    "RobustSolution",
    "golden_section",
    "auto_bracket",
    "subgradient_descent",
    "estimate",
    "solve_scene",
    "solve_padded",
    "chebyshev_closed_form",
]

GOLDEN_RATIO = 0.618


@dataclass(frozen=True)
class SolverConfig:
    """Solver knobs.

    ``step`` is ``"diminishing"`` (length ``step_scale / sqrt(t)`` along the
    normalized subgradient; ``step_scale=None`` uses the bracket diameter) or
    ``"polyak"`` (needs ``f_target``). ``bracket`` overrides the automatic
    golden-section range. ``stall_window`` (off by default) stops descent
    after that many iterations without an improvement of ``stall_tolerance``;
    early on the steps are too long for this to be a reliable signal.
    """

    tolerance: float = 1e-8
    max_iterations: int = 5000
    step: str = "diminishing"
    step_scale: Optional[float] = None
    f_target: Optional[float] = None
    bracket: Optional[Tuple[float, float]] = None
    stall_window: Optional[int] = None
    stall_tolerance: float = 1e-10

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InputError("tolerance must be positive")
        if self.max_iterations < 1:
            raise InputError("max_iterations must be at least 1")
        if self.step not in ("diminishing", "polyak"):
            raise InputError(f"unknown step schedule {self.step!r}")
        if self.step == "polyak" and self.f_target is None:
            raise InputError("polyak steps need f_target")
        if self.step_scale is not None and not self.step_scale > 0:
            raise InputError("step_scale must be positive")
        if self.stall_window is not None and self.stall_window < 1:
            raise InputError("stall_window must be at least 1")
        if self.bracket is not None and not self.bracket[0] < self.bracket[1]:
            raise InputError("explicit bracket needs lo < hi")


@dataclass
class RobustSolution:
    beta_star: np.ndarray
    f_star: float
    iterations: int
    alpha: np.ndarray
    scene: LocalScene
    converged: bool = True
    distribution: Optional[WorstCaseDistribution] = None

    @property
    def beta(self) -> float:
        """Scalar estimate (first coordinate) for m = 1 problems."""
        return float(self.beta_star[0])


def _golden(f: Callable, lo, hi, eps: float, r: float = GOLDEN_RATIO):
    b1 = np.array(lo, dtype=float, copy=True)
    b4 = np.array(hi, dtype=float, copy=True)
    scalar = b1.ndim == 0
    b1, b4 = np.atleast_1d(b1), np.atleast_1d(b4)
    if np.any(b4 < b1):
        raise InputError("golden-section bracket needs lo <= hi")
    evals = 0
    active = np.abs(b4 - b1) > eps
    while np.any(active):
        b2 = r * b1 + (1 - r) * b4
        b3 = (1 - r) * b1 + r * b4
        f2 = np.atleast_1d(np.asarray(f(b2[0] if scalar else b2), dtype=float))
        f3 = np.atleast_1d(np.asarray(f(b3[0] if scalar else b3), dtype=float))
        evals += 2
        if not (np.all(np.isfinite(f2[active])) and np.all(np.isfinite(f3[active]))):
            raise FloatingPointError("objective returned a non-finite value")
        left = f2 <= f3
        b4 = np.where(active & left, b3, b4)
        b1 = np.where(active & ~left, b2, b1)
        active = np.abs(b4 - b1) > eps
    mid = (b1 + b4) / 2
    return (float(mid[0]) if scalar else mid), evals


def golden_section(f: Callable, lo, hi, eps: float = 1e-8):
    """Minimize a unimodal ``f`` on ``[lo, hi]`` to bracket width ``eps``.

    Both interior points are re-evaluated every iteration with the fixed
    ratio 0.618. ``lo`` and ``hi`` may be arrays, in which case ``f`` maps an
    array of candidates to an array of values and every entry is searched
    independently (finished entries are frozen).
    """
    return _golden(f, lo, hi, eps)[0]


def auto_bracket(scene: LocalScene, loss) -> Tuple[float, float]:
    """Range ``[min y - rho/theta, max y + rho/theta]`` over the members, clipped to ``[a, b]``.

    Every attaining response lies inside it, so the convex worst-case loss
    increases away from it on both sides.
    """
    y = scene.responses[:, 0]
    reach = scene.rho / scene.theta
    lo = max(float(np.min(y)) - reach, loss.a)
    hi = min(float(np.max(y)) + reach, loss.b)
    return lo, hi


def _scalar_solve(scene: LocalScene, loss, config: SolverConfig):
    bracket = config.bracket or auto_bracket(scene, loss)

    def f(b):
        return worst_case_loss(scene, loss, b).f_value

    beta, evals = _golden(f, bracket[0], bracket[1], config.tolerance)
    return np.array([beta]), evals, True


def subgradient_descent(scene: LocalScene, loss: SquaredVector, config: SolverConfig = None):
    """Subgradient descent on ``f`` with best-iterate tracking.

    Starts at the mean member response. Returns ``(beta, f, iterations,
    converged)``; ``converged`` is False when ``f`` was still improving during
    the last tenth of the iteration budget.
    """
    config = config or SolverConfig()
    y = scene.responses
    beta = y.mean(axis=0)
    if config.step_scale is not None:
        scale = config.step_scale
    else:
        span = np.max(y, axis=0) - np.min(y, axis=0)
        scale = float(np.linalg.norm(span)) + 2 * scene.rho / scene.theta
        scale = scale if scale > 0 else 1.0
    ev = worst_case_loss(scene, loss, beta)
    best_beta, best_f = beta.copy(), ev.f_value
    last_gain_at, ref_f = 0, best_f
    t = 0
    converged = False
    while t < config.max_iterations:
        t += 1
        g = _subgradient_from_eval(ev, loss)
        gnorm = float(np.linalg.norm(g))
        if gnorm == 0.0:
            converged = True
            break
        if config.step == "polyak":
            beta = beta - (ev.f_value - config.f_target) / gnorm**2 * g
        else:
            beta = beta - (scale / math.sqrt(t)) * g / gnorm
        ev = worst_case_loss(scene, loss, beta)
        if ev.f_value < best_f:
            best_beta, best_f = beta.copy(), ev.f_value
        if ref_f - best_f > config.stall_tolerance:
            ref_f, last_gain_at = best_f, t
        elif config.stall_window is not None and t - last_gain_at >= config.stall_window:
            converged = True
            break
    else:
        # budget exhausted: call it converged if the last tenth brought nothing
        converged = t - last_gain_at >= max(1, config.max_iterations // 10)
    return best_beta, best_f, t, converged


def _all_squared(loss) -> bool:
    return isinstance(loss, (SquaredScalar, SquaredVector))


def solve_scene(scene: LocalScene, loss, config: SolverConfig = None):
    """Minimize the worst-case loss of a prepared scene.

    Returns ``(beta, f, iterations, converged)``. With no perturbation budget
    and no ring the objective is the plain sample average, so squared losses
    return the member mean directly.
    """
    config = config or SolverConfig()
    m = scene.responses.shape[1]
    if isinstance(loss, SquaredVector) and m == 1:
        loss = SquaredScalar()
    if _all_squared(loss) and scene.n_inner == scene.size and not np.any(scene.budgets > 0):
        beta = scene.responses.mean(axis=0)
        return beta, worst_case_loss(scene, loss, beta).f_value, 0, True
    if m == 1:
        beta, evals, ok = _scalar_solve(scene, loss, config)
        return beta, worst_case_loss(scene, loss, beta).f_value, evals, ok
    if not isinstance(loss, SquaredVector):
        raise InputError("multivariate responses need the SquaredVector loss")
    return subgradient_descent(scene, loss, config)


def solve_padded(batch: PaddedScenes, loss, tolerance: float = 1e-8) -> np.ndarray:
    """Row-wise minimizers for a padded batch of scalar scenes.

    Mirrors :func:`solve_scene`: rows without budget or ring under a squared
    loss take the member mean, all others run the vectorized golden-section
    search on their automatic bracket.
    """
    n_valid = np.count_nonzero(batch.valid, axis=1)
    passive = np.all(~batch.valid | (batch.inner & (batch.radii == 0)), axis=1)
    beta = np.empty(len(n_valid))
    direct = passive & _all_squared(loss)
    if np.any(direct):
        beta[direct] = (
            np.sum(np.where(batch.valid, batch.responses, 0.0), axis=1)[direct] / n_valid[direct]
        )
    rest = ~direct
    if np.any(rest):
        sub = PaddedScenes(
            batch.responses[rest], batch.radii[rest], batch.inner[rest],
            batch.valid[rest], batch.reach[rest],
        )
        lo, hi = sub.bracket(loss.a, loss.b)
        beta[rest] = golden_section(lambda b: sub.f(loss, b), lo, hi, tolerance)
    return beta


def estimate(
    dataset: Dataset,
    query: Query,
    metric: GroundMetric,
    loss,
    config: SolverConfig = None,
    with_distribution: bool = False,
) -> RobustSolution:
    """Distributionally robust local estimate at ``query.x0``.

    Raises :class:`~drlce.locality.InfeasibleRadius` when ``rho`` is too small
    for any sample to reach the neighborhood.
    """
    _check_loss(loss, dataset.m, metric)
    if dataset.y_bounds is not None and isinstance(loss, (SquaredScalar, Pinball)):
        a, b = dataset.y_bounds
        if loss.a > a or loss.b < b:
            raise InputError("loss interval does not contain the declared response interval")
    scene = build_local_scene(dataset, query, metric)
    inner_loss = SquaredScalar() if isinstance(loss, SquaredVector) and dataset.m == 1 else loss
    beta, f, iters, ok = solve_scene(scene, inner_loss, config)
    ev = worst_case_loss(scene, inner_loss, beta)
    dist = None
    if with_distribution:
        dist = worst_case_distribution(scene, dataset, inner_loss, beta, metric)
    return RobustSolution(beta, f, iters, ev.alpha, scene, ok, dist)


def chebyshev_closed_form(scene: LocalScene) -> float:
    """Centre of the response hull ``[min(y - r), max(y + r)]``.

    This is the exact robust mean when ``gamma = 0`` under the squared loss on
    the whole real line with ``theta = 1``; kept as a reference for the
    golden-section path.
    """
    if scene.gamma != 0 or scene.theta != 1 or scene.n_inner or scene.responses.shape[1] != 1:
        raise InputError("closed form needs gamma = 0, theta = 1, a scalar response and no inner samples")
    y = scene.responses[:, 0]
    r = scene.budgets
    return 0.5 * float(np.min(y - r)) + 0.5 * float(np.max(y + r))
