import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from drlce.locality import (
    Dataset,
    GroundMetric,
    InfeasibleRadius,
    InputError,
    Query,
    adaptive_gamma,
    build_local_scene,
    check_feasible,
    covariate_distances,
    kappa,
    project_to_neighborhood,
    radius_rule,
)


def line_data(distances, ys=None):
    d = np.asarray(distances, dtype=float)
    ys = np.zeros(len(d)) if ys is None else np.asarray(ys, dtype=float)
    return Dataset(d[:, None], ys[:, None])


# -- Dataset and metrics


def test_dataset_validation():
    with pytest.raises(InputError):
        Dataset(np.zeros((2, 1)), np.zeros((3, 1)))
    with pytest.raises(InputError):
        Dataset(np.array([[np.nan]]), np.zeros((1, 1)))
    with pytest.raises(InputError):
        Dataset(np.zeros((2, 1)), np.array([[0.5], [3.0]]), y_bounds=(0.0, 2.0))
    d = Dataset(np.zeros((2, 1)), np.array([[0.5], [1.0]]), y_bounds=(0.0, 2.0))
    assert (d.N, d.n, d.m) == (2, 1, 1)
    with pytest.raises(ValueError):
        d.xs[0, 0] = 1.0


def test_covariate_distances_examples():
    data = Dataset(np.array([[3.0, 4.0], [0.0, 0.0], [1.0, -2.0]]), np.zeros((3, 1)))
    d2 = covariate_distances(data, [0, 0], GroundMetric(2))
    assert d2[0] == 5.0 and d2[1] == 0.0
    dinf = covariate_distances(data, [0, 0], GroundMetric("inf"))
    assert dinf[2] == 2.0
    d1 = covariate_distances(data, [0, 0], GroundMetric(1, weights=[2.0, 1.0]))
    assert d1[0] == 10.0
    with pytest.raises(InputError):
        covariate_distances(data, [0.0], GroundMetric())


def test_metric_validation():
    with pytest.raises(InputError):
        GroundMetric(theta=0)
    with pytest.raises(InputError):
        GroundMetric(weights=[1.0, -1.0])
    with pytest.raises(InputError):
        GroundMetric(covariate_norm=3)
    assert GroundMetric(theta=2.0).response(np.array([[0.5]]))[0] == 1.0


# -- kappa and projection


def test_kappa_examples():
    assert kappa(0.5, 0.2) == pytest.approx(0.3)
    assert kappa(0.1, 0.2) == 0.0
    # d = 0.7 in the plane; distance to the 0.2-ball is 0.5 (constrained minimization oracle)
    assert kappa(0.7, 0.2) == pytest.approx(0.5, abs=1e-12)


@given(
    st.integers(1, 5),
    st.sampled_from([1, 2, "inf"]),
    st.floats(0.0, 1.5),
    st.integers(0, 2**31),
)
def test_kappa_matches_numerical_projection(n, norm, gamma, seed):
    rng = np.random.default_rng(seed)
    metric = GroundMetric(norm)
    x0 = rng.uniform(-1, 1, n)
    x = rng.uniform(-2, 2, n)
    d = float(metric.covariate(x - x0))
    res = minimize(
        lambda z: float(metric.covariate(z - x)),
        x0 + (x - x0) * min(1.0, gamma / d) if d > 0 else x0,
        constraints=[{"type": "ineq", "fun": lambda z: gamma - float(metric.covariate(z - x0))}],
        method="SLSQP",
        options={"ftol": 1e-12, "maxiter": 500},
    )
    num = res.fun if res.success else math.inf
    closed = float(kappa(d, gamma))
    # the closed form must never be beaten and the radial projection attains it
    p = project_to_neighborhood(x, x0, d, gamma)
    assert float(metric.covariate(p - x0)) <= gamma + 1e-12
    assert float(metric.covariate(p - x)) == pytest.approx(closed, abs=1e-12)
    assert closed <= num + 1e-6


# -- feasibility


def test_check_feasible_examples():
    assert not check_feasible([0.4, 0.9], 0.2, 0.1)
    assert check_feasible([0.1, 5.0], 0.2, 0.0)
    assert check_feasible([0.4], 0.2, 0.2)


def test_infeasible_scene_carries_min_kappa():
    with pytest.raises(InfeasibleRadius) as e:
        build_local_scene(line_data([0.4, 0.9]), Query([0.0], gamma=0.2, rho=0.1), GroundMetric())
    assert e.value.min_kappa == pytest.approx(0.2)


# -- scene partition


def test_scene_example():
    sc = build_local_scene(line_data([0.05, 0.25, 0.45]), Query([0.0], gamma=0.2, rho=0.1), GroundMetric())
    assert list(sc.members) == [0, 1]
    assert list(sc.inner_indices) == [0]
    assert list(sc.ring_indices) == [1]
    np.testing.assert_allclose(sc.budgets, [0.1, 0.05], atol=1e-15)


def test_scene_rho_zero_and_gamma_zero():
    data = line_data([0.0, 0.1, 0.3, 0.5])
    sc = build_local_scene(data, Query([0.0], gamma=0.3, rho=0.0), GroundMetric())
    assert list(sc.members) == [0, 1, 2] and sc.n_inner == 3 and not np.any(sc.budgets)
    sc = build_local_scene(data, Query([0.0], gamma=0.0, rho=0.3), GroundMetric())
    assert list(sc.members) == [0, 1, 2]
    assert list(sc.inner_indices) == []  # d + rho <= 0 fails even at d = 0
    np.testing.assert_allclose(sc.budgets, [0.3, 0.2, 0.0], atol=1e-15)


def test_boundary_membership_tolerance():
    # 0.1 + 0.2 is not exactly 0.3 in floating point
    sc = build_local_scene(line_data([0.1 + 0.2]), Query([0.0], gamma=0.1, rho=0.2), GroundMetric())
    assert sc.size == 1 and sc.budgets[0] == 0.0


@st.composite
def scenes(draw):
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    N = draw(st.integers(1, 15))
    data = Dataset(rng.uniform(-1, 1, (N, 2)), rng.uniform(0, 1, (N, 1)))
    gamma = draw(st.floats(0.0, 1.0))
    rho = draw(st.floats(0.0, 1.0))
    return data, gamma, rho


@given(scenes())
def test_scene_invariants(args):
    data, gamma, rho = args
    metric = GroundMetric()
    d = covariate_distances(data, [0.0, 0.0], metric)
    try:
        sc = build_local_scene(data, Query([0.0, 0.0], gamma=gamma, rho=rho), metric)
    except InfeasibleRadius:
        assert not check_feasible(d, gamma, rho)
        assert np.min(kappa(d, gamma)) > rho
        return
    assert check_feasible(d, gamma, rho)
    tol = 1e-12 * np.maximum(1, d)
    assert set(sc.members) == set(np.flatnonzero(d <= rho + gamma + tol))
    assert set(sc.inner_indices) == set(np.flatnonzero(d + rho <= gamma + tol))
    assert set(sc.inner_indices) | set(sc.ring_indices) == set(sc.members)
    assert not set(sc.inner_indices) & set(sc.ring_indices)
    assert np.all((sc.budgets >= 0) & (sc.budgets <= rho))
    assert np.all(sc.budgets[sc.inner] == rho)
    ring_d = sc.distances[~sc.inner]
    ring_r = sc.budgets[~sc.inner]
    # ring budgets fall short of rho exactly when the sample lies outside the neighborhood
    assert np.all((ring_r < rho) == (ring_d > gamma))


@given(scenes(), st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_members_monotone_in_radii(args, dg, dr):
    data, gamma, rho = args
    metric = GroundMetric()

    def members(g, r):
        try:
            return set(build_local_scene(data, Query([0.0, 0.0], gamma=g, rho=r), metric).members)
        except InfeasibleRadius:
            return set()

    base = members(gamma, rho)
    assert base <= members(gamma + dg, rho)
    assert base <= members(gamma, rho + dr)


# -- adaptive gamma and the radius rule


def test_adaptive_gamma_examples():
    d = [0.4, 0.1, 0.2]
    assert adaptive_gamma(d, 1.5) == pytest.approx(0.15)
    assert adaptive_gamma(d, 2) == 0.2
    assert adaptive_gamma(d, 3) == 0.4
    with pytest.raises(InputError):
        adaptive_gamma(d, 3.5)
    with pytest.raises(InputError):
        adaptive_gamma(d, 0.5)


@given(st.integers(0, 2**31), st.integers(1, 20))
def test_adaptive_integer_rank_gives_knn_set(seed, N):
    rng = np.random.default_rng(seed)
    data = Dataset(rng.uniform(-1, 1, (N, 1)), rng.uniform(0, 1, (N, 1)))
    k = int(rng.integers(1, N + 1))
    metric = GroundMetric()
    d = covariate_distances(data, [0.0], metric)
    sc = build_local_scene(data, Query([0.0], gamma_rank=k, rho=0.0), metric)
    assert set(sc.members) == set(np.argsort(d, kind="stable")[:k])


def test_query_resolution():
    d = np.array([0.1, 0.2, 0.4])
    assert Query([0.0], gamma_rank=2, rho_factor=0.5).resolve(d) == pytest.approx((0.2, 0.1))
    with pytest.raises(InputError):
        Query([0.0], gamma=0.1, gamma_rank=1, rho=0.0)
    with pytest.raises(InputError):
        Query([0.0], gamma=-0.1, rho=0.0)


def test_radius_rule_examples():
    assert radius_rule(math.e, 1, 1, 1.0) == pytest.approx(0.6065306597126334, rel=1e-12)
    assert radius_rule(100, 2, 2, 1.0) == pytest.approx(0.46324572596941976, rel=1e-12)
    assert radius_rule(100, 2, 2, 2.0) == pytest.approx(2 * 0.46324572596941976, rel=1e-12)
    with pytest.raises(InputError):
        radius_rule(1, 1, 1, 1.0)
    with pytest.raises(InputError):
        radius_rule(10, 1, 1, 0.0)
