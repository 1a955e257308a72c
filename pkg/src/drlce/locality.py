"""Covariate geometry around a query point.

Everything the robust estimator needs to know about *where* the samples sit
relative to ``x0``: distances, the transport slack of each sample towards the
neighborhood ``{x : D_X(x, x0) <= gamma}``, feasibility of the ambiguity
radius and the split of the relevant samples into an inner set (whose whole
perturbation ball stays inside the neighborhood) and a ring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

__all__ = [
    "InputError",
    "InfeasibleRadius",
    "Dataset",
    "GroundMetric",
    "Query",
    "LocalScene",
    "covariate_distances",
    "kappa",
    "check_feasible",
    "build_local_scene",
    "adaptive_gamma",
    "radius_rule",
    "project_to_neighborhood",
    "MEMBERSHIP_RTOL",
]

# Boundary tests use d <= bound + MEMBERSHIP_RTOL * max(1, d).
MEMBERSHIP_RTOL = 1e-12

NormSpec = Union[int, float, str]


class InputError(ValueError):
    """Malformed or inconsistent user input."""


class InfeasibleRadius(Exception):
    """No distribution in the ball puts mass on the neighborhood."""

    def __init__(self, min_kappa: float, rho: float, gamma: float):
        self.min_kappa = float(min_kappa)
        self.rho = float(rho)
        self.gamma = float(gamma)
        super().__init__(
            f"rho={rho:.6g} is below the minimum transport slack {min_kappa:.6g} "
            f"(gamma={gamma:.6g})"
        )


def _parse_norm(p: NormSpec) -> float:
    if isinstance(p, str):
        key = p.strip().lower()
        if key in ("inf", "infinity", "max"):
            return math.inf
        try:
            p = float(key)
        except ValueError as exc:
            raise InputError(f"unknown norm {p!r}") from exc
    p = float(p)
    if p not in (1.0, 2.0, math.inf):
        raise InputError(f"norm order must be 1, 2 or inf, got {p}")
    return p


@dataclass(frozen=True)
class Dataset:
    """``N`` labeled samples with covariates ``xs`` (N, n) and responses ``ys`` (N, m).

    ``y_bounds`` optionally declares the response interval ``[a, b]`` (m = 1 only);
    every response must lie inside it.
    """

    xs: np.ndarray
    ys: np.ndarray
    y_bounds: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        if ys.ndim == 1:
            ys = ys[:, None]
        if xs.ndim != 2 or ys.ndim != 2:
            raise InputError("xs and ys must be 1-D or 2-D arrays")
        if xs.shape[0] != ys.shape[0]:
            raise InputError(f"xs has {xs.shape[0]} rows but ys has {ys.shape[0]}")
        if xs.shape[0] < 1 or xs.shape[1] < 1 or ys.shape[1] < 1:
            raise InputError("dataset needs N >= 1, n >= 1, m >= 1")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise InputError("dataset contains non-finite entries")
        if self.y_bounds is not None:
            a, b = (float(v) for v in self.y_bounds)
            if not a < b:
                raise InputError(f"response interval needs a < b, got [{a}, {b}]")
            if ys.shape[1] != 1:
                raise InputError("a response interval is only defined for m = 1")
            if np.any(ys < a) or np.any(ys > b):
                raise InputError(f"responses must lie inside [{a}, {b}]")
            object.__setattr__(self, "y_bounds", (a, b))
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def N(self) -> int:
        return self.xs.shape[0]

    @property
    def n(self) -> int:
        return self.xs.shape[1]

    @property
    def m(self) -> int:
        return self.ys.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.xs[rows], self.ys[rows], self.y_bounds)


@dataclass(frozen=True)
class GroundMetric:
    """Transport cost ``D_X(x, x') + theta * ||y - y'||``.

    The covariate part is a (weighted) 1-, 2- or inf-norm, the response part a
    2- or inf-norm scaled by ``theta``; both coincide with ``theta*|y - y'|``
    when m = 1.
    """

    covariate_norm: NormSpec = 2
    weights: Optional[Sequence[float]] = None
    response_norm: NormSpec = 2
    theta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "covariate_norm", _parse_norm(self.covariate_norm))
        object.__setattr__(self, "response_norm", _parse_norm(self.response_norm))
        if self.response_norm == 1.0:
            raise InputError("response metric must be the 2- or inf-norm")
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise InputError(f"theta must be positive, got {self.theta}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel()
            if np.any(~np.isfinite(w)) or np.any(w <= 0):
                raise InputError("covariate weights must be positive")
            object.__setattr__(self, "weights", tuple(float(v) for v in w))

    def covariate(self, diff: np.ndarray) -> np.ndarray:
        """Norm of covariate differences along the last axis."""
        diff = np.asarray(diff, dtype=float)
        if self.weights is not None:
            if len(self.weights) != diff.shape[-1]:
                raise InputError(
                    f"{len(self.weights)} weights for {diff.shape[-1]} covariates"
                )
            diff = diff * np.asarray(self.weights)
        return np.linalg.norm(diff, ord=self.covariate_norm, axis=-1)

    def response(self, diff: np.ndarray) -> np.ndarray:
        """``theta`` times the norm of response differences along the last axis."""
        diff = np.asarray(diff, dtype=float)
        return self.theta * np.linalg.norm(diff, ord=self.response_norm, axis=-1)


@dataclass(frozen=True)
class Query:
    """A query covariate with its neighborhood and ambiguity radii.

    Exactly one of ``gamma`` / ``gamma_rank`` and one of ``rho`` / ``rho_factor``
    must be given. ``gamma_rank`` interpolates between sorted neighbor
    distances (see :func:`adaptive_gamma`); ``rho_factor`` sets ``rho`` to a
    multiple of the resolved ``gamma``.
    """

    x0: np.ndarray
    gamma: Optional[float] = None
    gamma_rank: Optional[float] = None
    rho: Optional[float] = None
    rho_factor: Optional[float] = None

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.ndim != 1 or not np.all(np.isfinite(x0)):
            raise InputError("x0 must be a finite vector")
        object.__setattr__(self, "x0", x0)
        if (self.gamma is None) == (self.gamma_rank is None):
            raise InputError("give exactly one of gamma and gamma_rank")
        if (self.rho is None) == (self.rho_factor is None):
            raise InputError("give exactly one of rho and rho_factor")
        for name in ("gamma", "rho", "rho_factor"):
            v = getattr(self, name)
            if v is not None and not (v >= 0 and math.isfinite(v)):
                raise InputError(f"{name} must be finite and non-negative, got {v}")
        if self.gamma_rank is not None and not self.gamma_rank >= 1:
            raise InputError(f"gamma_rank must be >= 1, got {self.gamma_rank}")

    def resolve(self, distances: np.ndarray) -> Tuple[float, float]:
        """Return the concrete ``(gamma, rho)`` for the given sample distances."""
        if self.gamma is not None:
            gamma = float(self.gamma)
        else:
            gamma = adaptive_gamma(distances, self.gamma_rank)
        rho = float(self.rho) if self.rho is not None else float(self.rho_factor) * gamma
        return gamma, rho


@dataclass(frozen=True)
class LocalScene:
    """Samples relevant to one query.

    ``members`` are dataset row indices (ascending) with distance at most
    ``rho + gamma``; ``inner`` flags the members whose distance plus ``rho``
    is at most ``gamma``; the rest form the ring. ``budgets`` hold the response
    perturbation budget ``rho - max(0, d - gamma)`` of each member, measured
    in transport-cost units; divide by ``theta`` for a radius in response space.
    """

    x0: np.ndarray
    gamma: float
    rho: float
    members: np.ndarray
    distances: np.ndarray
    inner: np.ndarray
    budgets: np.ndarray
    responses: np.ndarray
    theta: float
    min_kappa: float

    @property
    def radii(self) -> np.ndarray:
        """Response-space radius of each member's perturbation ball."""
        return self.budgets / self.theta

    @property
    def inner_indices(self) -> np.ndarray:
        return self.members[self.inner]

    @property
    def ring_indices(self) -> np.ndarray:
        return self.members[~self.inner]

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def n_inner(self) -> int:
        return int(np.count_nonzero(self.inner))


def covariate_distances(dataset: Dataset, x0, metric: GroundMetric) -> np.ndarray:
    """``D_X(x0, x_i)`` for every sample."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (dataset.n,):
        raise InputError(f"x0 has shape {x0.shape}, expected ({dataset.n},)")
    return metric.covariate(dataset.xs - x0)


def kappa(d, gamma: float):
    """Transport slack ``max(0, d - gamma)`` of a sample at distance ``d``.

    For norm-induced metrics this is the distance from the sample to its
    radial projection onto the neighborhood of radius ``gamma``.
    """
    return np.maximum(0.0, np.asarray(d, dtype=float) - gamma)


def _tol(d):
    return MEMBERSHIP_RTOL * np.maximum(1.0, d)


def check_feasible(distances, gamma: float, rho: float) -> bool:
    """True iff ``rho >= min_i kappa_i``, i.e. some sample can reach the neighborhood."""
    d = np.asarray(distances, dtype=float)
    if d.size == 0:
        return False
    return bool(np.any(d <= rho + gamma + _tol(d)))


def project_to_neighborhood(x, x0, d, gamma: float) -> np.ndarray:
    """Radial projection of ``x`` (at distance ``d`` from ``x0``) onto the ``gamma``-ball."""
    x = np.asarray(x, dtype=float)
    if d <= gamma:
        return x.copy()
    return x0 + (x - x0) * (gamma / d)


def build_local_scene(dataset: Dataset, query: Query, metric: GroundMetric) -> LocalScene:
    """Resolve the query radii and partition the relevant samples.

    Raises :class:`InfeasibleRadius` when no sample can be transported into
    the neighborhood within ``rho``.
    """
    d_all = covariate_distances(dataset, query.x0, metric)
    gamma, rho = query.resolve(d_all)
    min_kappa = float(np.min(kappa(d_all, gamma)))
    tol = _tol(d_all)
    member = d_all <= rho + gamma + tol
    if not np.any(member):
        raise InfeasibleRadius(min_kappa, rho, gamma)
    members = np.flatnonzero(member)
    d = d_all[members]
    inner = d + rho <= gamma + tol[members]
    budgets = np.clip(rho - kappa(d, gamma), 0.0, rho)
    budgets[inner] = rho
    responses = dataset.ys[members]
    for arr in (members, d, inner, budgets):
        arr.setflags(write=False)
    return LocalScene(
        x0=query.x0,
        gamma=gamma,
        rho=rho,
        members=members,
        distances=d,
        inner=inner,
        budgets=budgets,
        responses=responses,
        theta=metric.theta,
        min_kappa=min_kappa,
    )


def adaptive_gamma(distances, rank: float) -> float:
    """Neighborhood radius interpolated between the sorted sample distances.

    ``rank = 2.5`` gives the midpoint between the 2nd and 3rd smallest distance;
    integer ranks return the exact order statistic.
    """
    d = np.sort(np.asarray(distances, dtype=float).ravel())
    if not (1 <= rank <= d.size):
        raise InputError(f"rank {rank} outside [1, {d.size}]")
    lo = int(math.floor(rank))
    hi = int(math.ceil(rank))
    frac = rank - lo
    if frac == 0:
        return float(d[lo - 1])
    return float(d[lo - 1] + frac * (d[hi - 1] - d[lo - 1]))


def radius_rule(N: float, n: int, m: int, C: float) -> float:
    """Ambiguity radius ``C N^{-1/(n+m)} (log N)^{1/(n+m)}`` from the finite-sample guarantee.

    The two-dimensional case uses ``C N^{-1/2} (log N)^{3/4}``. ``C`` has no
    default: it depends on the unknown support and density bounds.
    """
    if not N >= 2:
        raise InputError(f"N must be at least 2, got {N}")
    if not C > 0:
        raise InputError(f"C must be positive, got {C}")
    dim = n + m
    logn = math.log(N)
    if dim == 2:
        return C * N ** -0.5 * logn ** 0.75
    return C * N ** (-1.0 / dim) * logn ** (1.0 / dim)
