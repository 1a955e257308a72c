"""Worst-case conditional expected loss over a type-infinity Wasserstein ball.

For a local scene (see :mod:`drlce.locality`) the adversary may move every
relevant sample's response inside a ball of radius ``budget / theta`` and
decide, for ring samples, whether to push them into the neighborhood. The
resulting sup reduces to a fractional program over a 0/1 participation mask
``alpha`` which a sort-and-extend greedy solves exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .locality import Dataset, GroundMetric, InputError, LocalScene

__all__ = [
    "SquaredScalar",
    "Pinball",
    "quantile_loss",
    "SquaredVector",
    "LossSpec",
    "WorstCaseEval",
    "WorstCaseDistribution",
    "v_star_squared_scalar",
    "v_star_pinball",
    "v_star_vector_2ball",
    "v_star_vector_infball",
    "select_alpha",
    "prefix_ratio_max",
    "worst_case_loss",
    "attaining_point",
    "subgradient",
    "worst_case_distribution",
    "balanced_worst_case_distribution",
    "PaddedScenes",
]


# --------------------------------------------------------------------------
# Inner maxima (closed forms)


def _interval(yhat, r, a, b):
    return np.maximum(a, yhat - r), np.minimum(b, yhat + r)


def v_star_squared_scalar(yhat, r, a, b, beta):
    """Largest ``(y - beta)^2`` over ``y in [a, b]`` with ``|y - yhat| <= r``."""
    lo, hi = _interval(yhat, r, a, b)
    return np.maximum((lo - beta) ** 2, (hi - beta) ** 2)


def v_star_pinball(yhat, r, a, b, beta, tau):
    """Largest pinball loss ``max(-tau u, (1 - tau) u)``, ``u = y - beta``, over the same interval."""
    lo, hi = _interval(yhat, r, a, b)
    return np.maximum(-tau * (lo - beta), (1.0 - tau) * (hi - beta))


def v_star_vector_2ball(yhat, r, beta):
    """``max ||y - beta||_2^2`` over the Euclidean ball of radius ``r`` around ``yhat``."""
    dist = np.linalg.norm(np.asarray(yhat, dtype=float) - beta, axis=-1)
    return (r + dist) ** 2


def v_star_vector_infball(yhat, r, beta):
    """``max ||y - beta||_2^2`` over the box ``||y - yhat||_inf <= r``; separable per coordinate."""
    w = np.asarray(yhat, dtype=float) - beta
    r = np.asarray(r, dtype=float)[..., None]
    return np.sum(np.maximum((w - r) ** 2, (w + r) ** 2), axis=-1)


# --------------------------------------------------------------------------
# Loss specifications


@dataclass(frozen=True)
class SquaredScalar:
    """Squared loss on a scalar response restricted to ``[a, b]``."""

    a: float = -math.inf
    b: float = math.inf
    ball = "2"

    def __post_init__(self):
        if not self.a < self.b:
            raise InputError(f"need a < b, got [{self.a}, {self.b}]")

    def value(self, y, beta):
        return (np.asarray(y)[..., 0] - beta[..., 0]) ** 2

    def v_star(self, yhat, r, beta):
        return v_star_squared_scalar(yhat[..., 0], r, self.a, self.b, beta[..., 0])

    def attaining(self, yhat, r, beta):
        lo, hi = _interval(yhat[..., 0], r, self.a, self.b)
        b0 = beta[..., 0]
        take_lo = (lo - b0) ** 2 >= (hi - b0) ** 2
        return np.where(take_lo, lo, hi)[..., None]

    def gradient(self, y, beta):
        return -2.0 * (y - beta)


@dataclass(frozen=True)
class Pinball:
    """Pinball loss ``max(-tau u, (1 - tau) u)`` with ``u = y - beta``, response in ``[a, b]``.

    Under this sign convention the minimizer is the ``(1 - tau)``-quantile;
    use :func:`quantile_loss` to target a quantile level directly.
    """

    tau: float
    a: float = -math.inf
    b: float = math.inf
    ball = "2"

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise InputError(f"tau must lie in (0, 1), got {self.tau}")
        if not self.a < self.b:
            raise InputError(f"need a < b, got [{self.a}, {self.b}]")

    def value(self, y, beta):
        u = np.asarray(y)[..., 0] - beta[..., 0]
        return np.maximum(-self.tau * u, (1.0 - self.tau) * u)

    def v_star(self, yhat, r, beta):
        return v_star_pinball(yhat[..., 0], r, self.a, self.b, beta[..., 0], self.tau)

    def attaining(self, yhat, r, beta):
        lo, hi = _interval(yhat[..., 0], r, self.a, self.b)
        b0 = beta[..., 0]
        take_lo = -self.tau * (lo - b0) >= (1.0 - self.tau) * (hi - b0)
        return np.where(take_lo, lo, hi)[..., None]

    def gradient(self, y, beta):
        # right derivative in beta at the kink y == beta
        u = y - beta
        return np.where(u > 0, -(1.0 - self.tau), self.tau)


@dataclass(frozen=True)
class SquaredVector:
    """Squared Euclidean loss on a vector response; ``ball`` is the response-metric ball."""

    ball: str = "2"

    def __post_init__(self):
        key = str(self.ball).lower()
        if key in ("2", "2.0", "l2", "two"):
            key = "2"
        elif key in ("inf", "infinity", "linf", "max"):
            key = "inf"
        else:
            raise InputError(f"ball must be '2' or 'inf', got {self.ball!r}")
        object.__setattr__(self, "ball", key)

    a = -math.inf
    b = math.inf

    def value(self, y, beta):
        return np.sum((np.asarray(y) - beta) ** 2, axis=-1)

    def v_star(self, yhat, r, beta):
        if self.ball == "2":
            return v_star_vector_2ball(yhat, r, beta)
        return v_star_vector_infball(yhat, r, beta)

    def attaining(self, yhat, r, beta):
        yhat = np.asarray(yhat, dtype=float)
        r = np.asarray(r, dtype=float)[..., None]
        w = yhat - beta
        if self.ball == "2":
            norm = np.linalg.norm(w, axis=-1, keepdims=True)
            e1 = np.zeros(w.shape[-1])
            e1[0] = 1.0
            direction = np.where(norm > 0, w / np.where(norm > 0, norm, 1.0), e1)
            return yhat + r * direction
        # per coordinate the lower corner wins exact ties
        return np.where((w - r) ** 2 >= (w + r) ** 2, yhat - r, yhat + r)

    def gradient(self, y, beta):
        return -2.0 * (y - beta)


def quantile_loss(level: float, a: float = -math.inf, b: float = math.inf) -> Pinball:
    """Pinball loss whose minimizer is the ``level``-quantile."""
    if not 0.0 < level < 1.0:
        raise InputError(f"quantile level must lie in (0, 1), got {level}")
    return Pinball(1.0 - level, a, b)


LossSpec = Union[SquaredScalar, Pinball, SquaredVector]


def _check_loss(loss, m: int, metric: GroundMetric = None):
    if isinstance(loss, (SquaredScalar, Pinball)):
        if m != 1:
            raise InputError(f"{type(loss).__name__} needs a scalar response, got m={m}")
    elif isinstance(loss, SquaredVector):
        if metric is not None and m > 1:
            want = "2" if metric.response_norm == 2 else "inf"
            if want != loss.ball:
                raise InputError(
                    f"loss ball {loss.ball!r} does not match response norm {want!r}"
                )
    else:
        raise InputError(f"unsupported loss {loss!r}")


# --------------------------------------------------------------------------
# Fractional program


def select_alpha(values, inner) -> Tuple[np.ndarray, float]:
    """Optimal participation mask and worst-case ratio.

    Maximizes ``(sum_inner v + sum_ring alpha v) / (|inner| + sum_ring alpha)``
    over binary ``alpha`` on the ring (inner samples always participate).
    Ring values are visited in decreasing order and added while they are at
    least the running ratio; once one falls below it no later one can help.
    Without inner samples the mask is exactly the set of maximizers.
    """
    v = np.asarray(values, dtype=float)
    inner = np.asarray(inner, dtype=bool)
    if v.size == 0:
        raise ValueError("empty index set")
    alpha = inner.copy()
    total = float(np.sum(v[inner]))
    count = int(np.count_nonzero(inner))
    ring = np.flatnonzero(~inner)
    order = ring[np.argsort(-v[ring], kind="stable")]
    for j in order:
        if count == 0 or v[j] >= total / count:
            alpha[j] = True
            total += v[j]
            count += 1
        else:
            break
    return alpha, total / count


def prefix_ratio_max(values, inner, valid):
    """Row-wise optimal ratio for padded batches, shape (B, K) -> (B,).

    Same value as :func:`select_alpha`: the best ring prefix of the sorted
    values, found by scanning every prefix length.
    """
    v = np.asarray(values, dtype=float)
    inner = np.asarray(inner, dtype=bool) & valid
    ring = valid & ~inner
    c = np.sum(np.where(inner, v, 0.0), axis=-1)
    d = np.count_nonzero(inner, axis=-1)
    ring_sorted = -np.sort(np.where(ring, -v, np.inf), axis=-1)
    n_ring = np.count_nonzero(ring, axis=-1)
    k = np.arange(1, v.shape[-1] + 1)
    csum = np.cumsum(np.where(np.isfinite(ring_sorted), ring_sorted, 0.0), axis=-1)
    ratios = (c[..., None] + csum) / (d[..., None] + k)
    ratios = np.where(k <= n_ring[..., None], ratios, -np.inf)
    with np.errstate(invalid="ignore", divide="ignore"):
        base = np.where(d > 0, c / np.maximum(d, 1), -np.inf)
    return np.maximum(base, np.max(ratios, axis=-1))


# --------------------------------------------------------------------------
# Worst-case evaluation


@dataclass(frozen=True)
class WorstCaseEval:
    """Worst-case loss at one ``beta``.

    ``v_values``, ``alpha`` and ``attaining_points`` are aligned with
    ``scene.members``; attaining points are reported for every member, only
    those with ``alpha`` set are used by the adversary.
    """

    beta: np.ndarray
    f_value: float
    v_values: np.ndarray
    alpha: np.ndarray
    attaining_points: np.ndarray


def _as_beta(beta, m: int) -> np.ndarray:
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.shape != (m,):
        raise InputError(f"beta has shape {beta.shape}, expected ({m},)")
    return beta


def worst_case_loss(scene: LocalScene, loss: LossSpec, beta) -> WorstCaseEval:
    """Evaluate the worst-case conditional expected loss ``f(beta)``."""
    m = scene.responses.shape[1]
    _check_loss(loss, m)
    beta = _as_beta(beta, m)
    radii = scene.radii
    v = loss.v_star(scene.responses, radii, beta)
    alpha, f = select_alpha(v, scene.inner)
    y_star = loss.attaining(scene.responses, radii, beta)
    return WorstCaseEval(beta, f, v, alpha, y_star)


def attaining_point(loss: LossSpec, yhat, r, beta) -> np.ndarray:
    """A response within radius ``r`` of ``yhat`` where the loss reaches its inner max."""
    yhat = np.atleast_1d(np.asarray(yhat, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    return loss.attaining(yhat[None, :], np.asarray([float(r)]), beta)[0]


def subgradient(scene: LocalScene, loss: LossSpec, beta) -> np.ndarray:
    """Subgradient of ``f`` at ``beta``: the alpha-weighted mean loss gradient at the attaining points."""
    ev = worst_case_loss(scene, loss, beta)
    return _subgradient_from_eval(ev, loss)


def _subgradient_from_eval(ev: WorstCaseEval, loss: LossSpec) -> np.ndarray:
    g = loss.gradient(ev.attaining_points[ev.alpha], ev.beta)
    return np.mean(g, axis=0)


# --------------------------------------------------------------------------
# Worst-case distributions


@dataclass(frozen=True)
class WorstCaseDistribution:
    """Discrete distribution with atoms ``(xs[j], ys[j])`` of mass ``masses[j]``.

    ``source[j]`` is the sample each atom was transported from and
    ``inside[j]`` flags atoms placed in the neighborhood by construction.
    """

    xs: np.ndarray
    ys: np.ndarray
    masses: np.ndarray
    source: np.ndarray
    inside: np.ndarray

    def conditional_mean(self) -> np.ndarray:
        """Mean response given the covariate lies in the neighborhood."""
        w = self.masses * self.inside
        return (w @ self.ys) / np.sum(w)

    def conditional_expected_loss(self, loss: LossSpec, beta) -> float:
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        w = self.masses * self.inside
        return float(np.sum(w * loss.value(self.ys, beta)) / np.sum(w))

    def displacement(self, dataset: Dataset, metric: GroundMetric) -> np.ndarray:
        """Transport cost of each atom from its source sample."""
        return metric.covariate(self.xs - dataset.xs[self.source]) + metric.response(
            self.ys - dataset.ys[self.source]
        )


def _push_out(x, x0, d, rho, metric: GroundMetric):
    # Move radially by rho so a ring sample that declines to participate
    # leaves the neighborhood; rho + d > gamma for every ring member.
    if d > 0:
        return x0 + (x - x0) * ((d + rho) / d)
    e1 = np.zeros_like(x)
    e1[0] = 1.0
    return x0 + e1 * (rho / float(metric.covariate(e1)))


def _assemble(scene, dataset, metric, alpha, y_star):
    xs = dataset.xs.copy()
    ys = dataset.ys.copy()
    inside = np.zeros(dataset.N, dtype=bool)
    for pos, i in enumerate(scene.members):
        d = scene.distances[pos]
        if alpha[pos]:
            if d > scene.gamma:
                xs[i] = scene.x0 + (dataset.xs[i] - scene.x0) * (scene.gamma / d)
            ys[i] = y_star[pos]
            inside[i] = True
        elif d <= scene.gamma:
            xs[i] = _push_out(dataset.xs[i], scene.x0, d, scene.rho, metric)
    masses = np.full(dataset.N, 1.0 / dataset.N)
    return xs, ys, masses, np.arange(dataset.N), inside


def worst_case_distribution(
    scene: LocalScene, dataset: Dataset, loss: LossSpec, beta, metric: GroundMetric = None
) -> WorstCaseDistribution:
    """Atomic distribution in the ball whose conditional expected loss equals ``f(beta)``.

    Participating samples move to ``(projection of x_i, y*_i)``; other ring
    samples inside the neighborhood are pushed out radially by ``rho``; all
    remaining samples stay put. Each atom carries mass ``1/N``.
    """
    metric = metric or GroundMetric(theta=scene.theta)
    ev = worst_case_loss(scene, loss, beta)
    return WorstCaseDistribution(*_assemble(scene, dataset, metric, ev.alpha, ev.attaining_points))


def balanced_worst_case_distribution(
    scene: LocalScene,
    dataset: Dataset,
    loss: LossSpec,
    beta: float,
    metric: GroundMetric = None,
    delta: float = None,
) -> WorstCaseDistribution:
    """Worst case at a scalar minimizer ``beta`` whose conditional mean is ``beta``.

    At a kink of ``f`` the atomic worst case is not unique. The adversary's
    configurations just left and right of ``beta`` are both optimal at
    ``beta``; mixing them (splitting each sample's mass between its two
    atoms) with the weight that centers the conditional mean on ``beta``
    yields the variance-maximizing worst case. The weight is clipped to
    ``[0, 1]``, so the mean only lands on ``beta`` when ``beta`` really
    minimizes ``f``. ``delta`` must exceed the error of ``beta``.
    """
    if scene.responses.shape[1] != 1 or not isinstance(loss, SquaredScalar):
        raise InputError("balanced worst case is defined for the scalar squared loss")
    metric = metric or GroundMetric(theta=scene.theta)
    beta = float(np.asarray(beta, dtype=float).ravel()[0])
    if delta is None:
        delta = 1e-7 * max(1.0, abs(beta))
    parts = []
    for b in (beta - delta, beta + delta):
        ev = worst_case_loss(scene, loss, b)
        parts.append(_assemble(scene, dataset, metric, ev.alpha, ev.attaining_points))
    (xl, yl, ml, sl, il), (xr, yr, mr, sr, ir) = parts
    mass_l, mass_r = ml @ il, mr @ ir
    pull_l = mass_l * (((ml * il) @ yl[:, 0]) / mass_l - beta)
    pull_r = mass_r * (((mr * ir) @ yr[:, 0]) / mass_r - beta)
    if pull_l == pull_r:
        w = 0.0
    else:
        w = float(np.clip(pull_l / (pull_l - pull_r), 0.0, 1.0))
    return WorstCaseDistribution(
        xs=np.concatenate([xl, xr]),
        ys=np.concatenate([yl, yr]),
        masses=np.concatenate([(1.0 - w) * ml, w * mr]),
        source=np.concatenate([sl, sr]),
        inside=np.concatenate([il, ir]),
    )


# --------------------------------------------------------------------------
# Padded batches, for evaluating many scalar scenes at once


@dataclass(frozen=True)
class PaddedScenes:
    """``B`` scalar-response scenes padded to a common member count ``K``.

    Arrays have shape (B, K); ``valid`` masks the padding. Used by the
    cross-validation harness to run one vectorized solve over all folds.
    """

    responses: np.ndarray
    radii: np.ndarray
    inner: np.ndarray
    valid: np.ndarray
    reach: np.ndarray

    @classmethod
    def from_scenes(cls, scenes) -> "PaddedScenes":
        K = max(s.size for s in scenes)
        B = len(scenes)
        resp = np.zeros((B, K))
        radii = np.zeros((B, K))
        inner = np.zeros((B, K), dtype=bool)
        valid = np.zeros((B, K), dtype=bool)
        reach = np.array([s.rho / s.theta for s in scenes])
        for b, s in enumerate(scenes):
            k = s.size
            resp[b, :k] = s.responses[:, 0]
            radii[b, :k] = s.radii
            inner[b, :k] = s.inner
            valid[b, :k] = True
        return cls(resp, radii, inner, valid, reach)

    def bracket(self, a: float = -math.inf, b: float = math.inf):
        """Per-scene ``[min y - rho/theta, max y + rho/theta]`` clipped to ``[a, b]``."""
        lo = np.min(np.where(self.valid, self.responses, np.inf), axis=1) - self.reach
        hi = np.max(np.where(self.valid, self.responses, -np.inf), axis=1) + self.reach
        return np.maximum(lo, a), np.minimum(hi, b)

    def f(self, loss: LossSpec, beta: np.ndarray) -> np.ndarray:
        """Worst-case loss of every scene at its own ``beta[b]``."""
        beta = np.asarray(beta, dtype=float)[:, None, None]
        v = loss.v_star(self.responses[..., None], self.radii, beta)
        return prefix_ratio_max(v, self.inner, self.valid)
