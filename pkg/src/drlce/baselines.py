"""Classical local regression estimators used as comparators."""

from __future__ import annotations

import numpy as np

from .locality import Dataset, GroundMetric, InputError, LocalScene, covariate_distances
from .solvers import RobustSolution, SolverConfig, solve_scene
from .robust_loss import worst_case_loss

__all__ = [
    "neighbor_order",
    "knn_mean",
    "gaussian_kernel",
    "epanechnikov_kernel",
    "kernel_regress",
    "robust_knn",
]


def neighbor_order(distances) -> np.ndarray:
    """Sample indices by increasing distance; ties keep index order."""
    return np.argsort(np.asarray(distances), kind="stable")


def _check_k(k, N):
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= N):
        raise InputError(f"k must be an integer in [1, {N}], got {k}")


def knn_mean(dataset: Dataset, x0, metric: GroundMetric, k: int) -> np.ndarray:
    """Average response of the ``k`` nearest samples."""
    _check_k(k, dataset.N)
    order = neighbor_order(covariate_distances(dataset, x0, metric))
    return dataset.ys[order[:k]].mean(axis=0)


def gaussian_kernel(u):
    return np.exp(-0.5 * np.asarray(u) ** 2)


def epanechnikov_kernel(u):
    return 0.75 * np.maximum(0.0, 1.0 - np.asarray(u) ** 2)


_KERNELS = {
    "gaussian": gaussian_kernel,
    "nw": gaussian_kernel,
    "epanechnikov": epanechnikov_kernel,
    "ne": epanechnikov_kernel,
}


def kernel_regress(
    dataset: Dataset, x0, metric: GroundMetric, kernel: str, h: float, return_fallback: bool = False
):
    """Kernel-weighted mean ``sum K(d_i/h) y_i / sum K(d_i/h)``.

    ``kernel`` is ``"gaussian"`` (Nadaraya-Watson) or ``"epanechnikov"``. If
    every weight vanishes (compact kernel, all samples farther than ``h``)
    the nearest sample's response is returned instead; ``return_fallback``
    additionally returns whether that happened.
    """
    if not h > 0:
        raise InputError(f"bandwidth must be positive, got {h}")
    try:
        K = _KERNELS[kernel.lower()]
    except KeyError:
        raise InputError(f"unknown kernel {kernel!r}") from None
    d = covariate_distances(dataset, x0, metric)
    w = K(d / h)
    total = w.sum()
    fallback = not total > 0
    if fallback:
        est = dataset.ys[neighbor_order(d)[0]].copy()
    else:
        est = (w @ dataset.ys) / total
    return (est, fallback) if return_fallback else est


def robust_knn(
    dataset: Dataset,
    x0,
    metric: GroundMetric,
    loss,
    k: int,
    rho_resp: float,
    config: SolverConfig = None,
) -> RobustSolution:
    """k-NN hedged against response perturbations only.

    Minimizes the average worst-case loss over the ``k`` nearest samples when
    each response may move by ``rho_resp`` (transport-cost units) and every
    sample keeps participating.
    """
    _check_k(k, dataset.N)
    if not rho_resp >= 0:
        raise InputError(f"rho_resp must be non-negative, got {rho_resp}")
    d = covariate_distances(dataset, x0, metric)
    members = np.sort(neighbor_order(d)[:k])
    scene = LocalScene(
        x0=np.atleast_1d(np.asarray(x0, dtype=float)),
        gamma=float(d[members].max()),
        rho=float(rho_resp),
        members=members,
        distances=d[members],
        inner=np.ones(k, dtype=bool),
        budgets=np.full(k, float(rho_resp)),
        responses=dataset.ys[members],
        theta=metric.theta,
        min_kappa=0.0,
    )
    beta, f, iters, ok = solve_scene(scene, loss, config)
    return RobustSolution(beta, f, iters, worst_case_loss(scene, loss, beta).alpha, scene, ok)
