import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from drlce.checks import enumerate_ratio, enumerated_worst_case, random_scene, sampled_inner_max
from drlce.locality import Dataset, GroundMetric, InputError, Query, build_local_scene
from drlce.robust_loss import (
    PaddedScenes,
    Pinball,
    SquaredScalar,
    SquaredVector,
    attaining_point,
    balanced_worst_case_distribution,
    prefix_ratio_max,
    select_alpha,
    subgradient,
    v_star_pinball,
    v_star_squared_scalar,
    v_star_vector_2ball,
    v_star_vector_infball,
    worst_case_distribution,
    worst_case_loss,
)

INF = math.inf


def micro():
    # distances 0.05 (inner), 0.25 (ring), 0.45 (irrelevant); responses 0, 1, 2
    data = Dataset(np.array([[0.05], [0.25], [0.45]]), np.array([[0.0], [1.0], [2.0]]))
    metric = GroundMetric()
    return data, metric, build_local_scene(data, Query([0.0], gamma=0.2, rho=0.1), metric)


# -- closed-form inner maxima


def test_v_star_squared_examples():
    assert v_star_squared_scalar(1.0, 0.5, -INF, INF, 0.0) == pytest.approx(2.25)
    assert v_star_squared_scalar(1.3, 0.0, -INF, INF, 0.2) == pytest.approx(1.21)
    assert v_star_squared_scalar(1.0, 2.0, 0.0, 1.5, 0.0) == pytest.approx(2.25)


def test_v_star_pinball_examples():
    assert v_star_pinball(2.0, 1.0, -INF, INF, 0.0, 0.5) == pytest.approx(1.5)
    assert v_star_pinball(0.7, 0.0, -INF, INF, 0.7, 0.3) == 0.0
    assert v_star_pinball(0.0, 1.0, -INF, INF, 2.0, 0.25) == pytest.approx(0.75)


def test_v_star_vector_examples():
    assert v_star_vector_2ball(np.array([1.0, 0.0]), 1.0, np.zeros(2)) == pytest.approx(4.0)
    assert v_star_vector_2ball(np.array([1.0, 2.0]), 0.0, np.zeros(2)) == pytest.approx(5.0)
    assert v_star_vector_2ball(np.zeros(2), 0.5, np.zeros(2)) == pytest.approx(0.25)
    assert v_star_vector_infball(np.array([1.0, -1.0]), 0.5, np.zeros(2)) == pytest.approx(4.5)
    assert v_star_vector_infball(np.array([1.0, 2.0]), 0.0, np.zeros(2)) == pytest.approx(5.0)


@given(st.floats(-3, 3), st.floats(0, 2), st.floats(-3, 3))
def test_infball_scalar_equals_unbounded_interval(y, r, b):
    got = v_star_vector_infball(np.array([y]), r, np.array([b]))
    assert got == pytest.approx(v_star_squared_scalar(y, r, -INF, INF, b), rel=1e-12, abs=1e-15)


@given(st.integers(0, 2**31))
def test_v_star_matches_sampling(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    if m == 1 and rng.random() < 0.6:
        a, b = sorted(rng.uniform(-1, 2, 2))
        loss = SquaredScalar(a, b) if rng.random() < 0.5 else Pinball(float(rng.uniform(0.05, 0.95)), a, b)
        yhat = np.array([rng.uniform(a, b)])
    else:
        loss = SquaredVector(str(rng.choice(["2", "inf"])))
        yhat = rng.uniform(0, 1, m)
    r = float(rng.uniform(0, 0.7))
    beta = rng.uniform(-1, 2, m)
    got = float(loss.v_star(yhat[None], np.array([r]), beta)[0])
    assert got == pytest.approx(sampled_inner_max(loss, yhat, r, beta), abs=1e-5)


@given(st.integers(0, 2**31))
def test_attaining_points_attain_within_ball(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    choice = int(rng.integers(4))
    if choice == 0:
        loss = SquaredScalar(-0.5, 1.3)
    elif choice == 1:
        loss = Pinball(float(rng.uniform(0.05, 0.95)), -0.5, 1.3)
    else:
        loss = SquaredVector("2" if choice == 2 else "inf")
    if choice < 2:
        m = 1
    yhat = rng.uniform(0, 1, m)
    r = float(rng.uniform(0, 0.7))
    beta = rng.uniform(-1, 2, m)
    y = attaining_point(loss, yhat, r, beta)
    ord_ = np.inf if choice == 3 else 2
    assert np.linalg.norm(y - yhat, ord=ord_) <= r * (1 + 1e-12) + 1e-15
    v = float(loss.v_star(yhat[None], np.array([r]), beta)[0])
    assert float(loss.value(y[None], beta)[0]) == pytest.approx(v, rel=1e-12, abs=1e-15)
    if choice < 2:
        assert loss.a <= y[0] <= loss.b


def test_attaining_tie_breaks():
    assert attaining_point(SquaredScalar(), [1.0], 0.5, [0.0])[0] == 1.5
    assert attaining_point(SquaredScalar(), [1.0], 0.5, [1.0])[0] == 0.5  # exact tie: lower end
    np.testing.assert_array_equal(attaining_point(SquaredVector("2"), [1.0, 0.0], 1.0, [0.0, 0.0]), [2.0, 0.0])
    np.testing.assert_array_equal(attaining_point(SquaredVector("2"), [0.0, 0.0], 1.0, [0.0, 0.0]), [1.0, 0.0])


def test_loss_validation():
    with pytest.raises(InputError):
        Pinball(1.0)
    with pytest.raises(InputError):
        SquaredScalar(1.0, 1.0)
    with pytest.raises(InputError):
        SquaredVector("1")


# -- fractional program


def test_select_alpha_examples():
    alpha, f = select_alpha([2.0, 5.0, 1.0], [True, False, False])
    assert list(alpha) == [True, True, False] and f == pytest.approx(3.5)
    alpha, f = select_alpha([3.0, 3.0, 1.0], [False, False, False])
    assert list(alpha) == [True, True, False] and f == 3.0
    alpha, f = select_alpha([1.0, 1.0, 4.0], [True, True, False])
    assert list(alpha) == [True, True, True] and f == pytest.approx(2.0)


def test_select_alpha_ties_included():
    # ring value equal to the running ratio joins without changing f
    alpha, f = select_alpha([2.0, 2.0, 1.0], [True, False, False])
    assert list(alpha) == [True, True, False] and f == 2.0


values = st.lists(st.floats(0, 10), min_size=1, max_size=12)


@given(values, st.data())
def test_select_alpha_equals_enumeration(v, data):
    inner = data.draw(st.lists(st.booleans(), min_size=len(v), max_size=len(v)))
    alpha, f = select_alpha(v, inner)
    assert f == pytest.approx(enumerate_ratio(v, inner), abs=1e-10)
    v, inner = np.array(v), np.array(inner)
    assert np.all(alpha[inner])
    assert alpha.any()
    assert f == pytest.approx(v[alpha].mean(), abs=1e-12)
    if not inner.any():
        assert set(np.flatnonzero(alpha)) == set(np.flatnonzero(v == v.max()))


@given(values, st.data())
def test_tie_invariance(v, data):
    inner = data.draw(st.lists(st.booleans(), min_size=len(v), max_size=len(v)))
    _, f = select_alpha(v, inner)
    _, f2 = select_alpha(v + [f], inner + [False])
    assert f2 == pytest.approx(f, abs=1e-12)


@given(st.integers(0, 2**31))
def test_prefix_ratio_max_matches_greedy(seed):
    rng = np.random.default_rng(seed)
    B, K = 8, 7
    v = rng.uniform(0, 10, (B, K))
    valid = rng.random((B, K)) < 0.8
    valid[:, 0] = True
    inner = rng.random((B, K)) < 0.4
    got = prefix_ratio_max(v, inner, valid)
    for b in range(B):
        sel = valid[b]
        assert got[b] == pytest.approx(select_alpha(v[b, sel], inner[b, sel])[1], abs=1e-12)


# -- worst-case loss


def test_micro_instance_value():
    _, _, sc = micro()
    ev = worst_case_loss(sc, SquaredScalar(), 0.0)
    # brute force over both masks with 1e-3 response grids gives 0.55625
    assert ev.f_value == pytest.approx(0.55625, abs=1e-12)
    assert list(ev.alpha) == [True, True]
    assert ev.f_value == pytest.approx(enumerated_worst_case(sc, SquaredScalar(), [0.0]), abs=1e-12)


def test_rho_zero_is_sample_average():
    data = Dataset(np.array([[0.0], [0.1], [0.2]]), np.array([[1.0], [2.0], [4.0]]))
    sc = build_local_scene(data, Query([0.0], gamma=0.15, rho=0.0), GroundMetric())
    assert worst_case_loss(sc, SquaredScalar(), 1.0).f_value == pytest.approx(0.5)
    assert worst_case_loss(sc, SquaredScalar(), 1.0).alpha.all()


def test_single_inner_sample():
    data = Dataset(np.array([[0.0]]), np.array([[1.0]]))
    sc = build_local_scene(data, Query([0.0], gamma=0.5, rho=0.5), GroundMetric())
    assert worst_case_loss(sc, SquaredScalar(), 0.0).f_value == pytest.approx(2.25)


def random_case(seed, m=None):
    rng = np.random.default_rng(seed)
    m = m or int(rng.integers(1, 3))
    kind = int(rng.integers(3)) if m == 1 else 2
    ball = str(rng.choice(["2", "inf"]))
    data, metric, sc = random_scene(rng, m=m, response_norm=2 if ball == "2" else np.inf)
    if kind == 0:
        loss = SquaredScalar()
    elif kind == 1:
        loss = Pinball(float(rng.uniform(0.1, 0.9)))
    else:
        loss = SquaredVector(ball)
    return rng, data, metric, sc, loss, m


@given(st.integers(0, 2**31))
def test_worst_case_equals_enumeration(seed):
    rng, _, _, sc, loss, m = random_case(seed)
    beta = rng.uniform(-0.5, 1.5, m)
    assert worst_case_loss(sc, loss, beta).f_value == pytest.approx(
        enumerated_worst_case(sc, loss, beta), abs=1e-5
    )


@given(st.integers(0, 2**31))
def test_zero_budgets_never_increase_f(seed):
    rng, _, _, sc, loss, m = random_case(seed)
    beta = rng.uniform(-0.5, 1.5, m)
    v0 = loss.value(sc.responses, beta)
    _, f0 = select_alpha(v0, sc.inner)
    assert f0 <= worst_case_loss(sc, loss, beta).f_value + 1e-12


@given(st.integers(0, 2**31))
def test_convex_in_beta(seed):
    rng, _, _, sc, loss, m = random_case(seed)
    b1, b2 = rng.uniform(-1, 2, (2, m))
    lam = float(rng.uniform())
    f = lambda b: worst_case_loss(sc, loss, b).f_value
    assert f(lam * b1 + (1 - lam) * b2) <= lam * f(b1) + (1 - lam) * f(b2) + 1e-10


# -- subgradients


def test_subgradient_examples():
    data = Dataset(np.array([[0.0]]), np.array([[1.0]]))
    sc = build_local_scene(data, Query([0.0], gamma=1.0, rho=0.5), GroundMetric())
    assert subgradient(sc, SquaredScalar(), 0.0)[0] == pytest.approx(-3.0)
    data = Dataset(np.zeros((3, 1)), np.array([[0.0, 1.0], [2.0, 0.0], [1.0, 2.0]]))
    sc = build_local_scene(data, Query([0.0], gamma=1.0, rho=0.0), GroundMetric())
    beta = np.array([0.3, -0.2])
    np.testing.assert_allclose(subgradient(sc, SquaredVector(), beta), 2 * (beta - data.ys.mean(0)))


def test_pinball_subgradient_at_kink_is_right_derivative():
    data = Dataset(np.array([[0.0]]), np.array([[1.0]]))
    sc = build_local_scene(data, Query([0.0], gamma=1.0, rho=0.0), GroundMetric())
    assert subgradient(sc, Pinball(0.3), 1.0)[0] == pytest.approx(0.3)


# -- worst-case distributions


def test_distribution_micro_instance():
    data, metric, sc = micro()
    q = worst_case_distribution(sc, data, SquaredScalar(), 0.0, metric)
    assert q.conditional_expected_loss(SquaredScalar(), 0.0) == pytest.approx(0.55625, abs=1e-12)
    # the irrelevant third sample stays where it was
    np.testing.assert_array_equal(q.xs[2], data.xs[2])
    np.testing.assert_array_equal(q.ys[2], data.ys[2])
    assert np.all(q.displacement(data, metric) <= sc.rho + 1e-12)


def test_distribution_rho_zero_is_empirical():
    data = Dataset(np.array([[0.0], [0.1], [0.5]]), np.array([[1.0], [2.0], [4.0]]))
    metric = GroundMetric()
    sc = build_local_scene(data, Query([0.0], gamma=0.2, rho=0.0), metric)
    q = worst_case_distribution(sc, data, SquaredScalar(), 1.5, metric)
    np.testing.assert_array_equal(q.xs, data.xs)
    np.testing.assert_array_equal(q.ys, data.ys)


def test_declining_ring_sample_is_pushed_out():
    # ring sample inside the neighborhood whose loss is below the inner ratio
    data = Dataset(np.array([[0.0], [0.15]]), np.array([[0.0], [0.5]]))
    metric = GroundMetric()
    sc = build_local_scene(data, Query([0.0], gamma=0.2, rho=0.1), metric)
    loss = SquaredScalar()
    ev = worst_case_loss(sc, loss, 5.0)
    assert list(ev.alpha) == [True, False]
    q = worst_case_distribution(sc, data, loss, 5.0, metric)
    assert abs(q.xs[1, 0]) > sc.gamma
    assert q.displacement(data, metric)[1] == pytest.approx(sc.rho)
    assert q.conditional_expected_loss(loss, 5.0) == pytest.approx(ev.f_value, abs=1e-12)


@given(st.integers(0, 2**31))
def test_distribution_properties(seed):
    rng, data, metric, sc, loss, m = random_case(seed)
    beta = rng.uniform(-0.5, 1.5, m)
    q = worst_case_distribution(sc, data, loss, beta, metric)
    assert np.all(q.masses == 1.0 / data.N)
    assert np.all(q.displacement(data, metric) <= sc.rho + 1e-12)
    inside = metric.covariate(q.xs - sc.x0) <= sc.gamma * (1 + 1e-12) + 1e-15
    assert np.all(inside[q.inside])
    assert q.conditional_expected_loss(loss, beta) == pytest.approx(
        worst_case_loss(sc, loss, beta).f_value, abs=1e-10
    )


# -- padded batches


def test_padded_batch_matches_scenes():
    rng = np.random.default_rng(7)
    scenes = [random_scene(rng)[2] for _ in range(12)]
    batch = PaddedScenes.from_scenes(scenes)
    beta = rng.uniform(-0.5, 1.5, len(scenes))
    for loss in (SquaredScalar(), Pinball(0.3)):
        got = batch.f(loss, beta)
        want = [worst_case_loss(s, loss, b).f_value for s, b in zip(scenes, beta)]
        np.testing.assert_allclose(got, want, atol=1e-12)
