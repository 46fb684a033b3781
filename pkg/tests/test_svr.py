import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from somfsvm.errors import ContractError, ConvergenceError, DataError, ParameterError
from somfsvm.svr import (
    GAUSSIAN,
    NORMALIZED,
    SvrConfig,
    SvrModel,
    gaussian_kernel,
    kernel_matrix,
    kkt_report,
    normalized_gaussian_kernel,
    normalized_weights,
    predict_svr,
    predict_svr_many,
    require_normalized,
    solve_dual,
    train_svr,
)

from oracles import dual_value, grid_search_dual

K_HALF = math.exp(-0.5)


def test_gaussian_kernel_values():
    x = np.array([0.3, -1.2])
    assert gaussian_kernel(x, x, 0.7) == 1.0
    assert gaussian_kernel([0.0], [2.0 * math.sqrt(2)], 2.0) == pytest.approx(math.exp(-1), rel=1e-15)
    with pytest.raises(ParameterError):
        gaussian_kernel([0.0], [0.0, 1.0], 1.0)


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.floats(0.05, 5))
def test_gaussian_kernel_symmetric_bounded(a, b, s):
    k = gaussian_kernel(a, b, s)
    assert k == gaussian_kernel(b, a, s)
    assert 0 <= k <= 1


def test_normalized_kernel_examples():
    assert normalized_gaussian_kernel([4.0, 4.0], [[0.0, 1.0]], [0.5], 0) == 1.0
    c = np.array([[-1.0, 0.0], [1.0, 0.0]])
    assert normalized_gaussian_kernel([0.0, 3.0], c, [1.0, 1.0], 0) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ParameterError):
        normalized_gaussian_kernel([0.0], np.zeros((0, 1)), [], 0)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_normalized_weights_partition_of_unity(seed):
    rng = np.random.default_rng(seed)
    d, l = rng.integers(1, 6), rng.integers(1, 30)
    C = rng.normal(size=(l, d)) * 3
    X = rng.normal(size=(5, d)) * 3
    W = normalized_weights(X, C, rng.uniform(0.1, 3, l))
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(W >= 0)


# --- solver vs grid-search oracle ------------------------------------------------


def two_point():
    X = np.array([[0.0], [1.0]])
    y = np.array([1.0, -1.0])
    return X, y


def test_two_point_closed_form_gaussian():
    X, y = two_point()
    K = kernel_matrix(X, GAUSSIAN, 1.0)
    beta, viol, _ = solve_dual(K, y, C=100.0, epsilon=0.1)
    b = 0.9 / (1 - K_HALF)  # hand-derived optimum, = 2.2873...
    np.testing.assert_allclose(beta, [b, -b], rtol=1e-9)
    assert viol <= 1e-4


def test_two_point_closed_form_normalized():
    X, y = two_point()
    K = kernel_matrix(X, NORMALIZED, 1.0)
    beta, _, _ = solve_dual(K, y, C=100.0, epsilon=0.1)
    b = 0.9 * (1 + K_HALF) / (1 - K_HALF)
    np.testing.assert_allclose(beta, [b, -b], rtol=1e-9)


@pytest.mark.parametrize("kind", [GAUSSIAN, NORMALIZED])
def test_two_point_against_grid_oracle(kind):
    X, y = two_point()
    C = 5.0
    K = kernel_matrix(X, kind, 1.0)
    beta, viol, _ = solve_dual(K, y, C, 0.1)
    ref, ref_val = grid_search_dual(K, y, C, 0.1)
    assert dual_value(K, y, beta, 0.1) == pytest.approx(ref_val, abs=1e-3)
    np.testing.assert_allclose(beta, ref, atol=1e-3)
    assert beta[0] > 0 > beta[1] and beta.sum() == pytest.approx(0, abs=1e-12)
    np.testing.assert_allclose(K @ beta, K @ ref, atol=1e-3)
    assert viol <= 1e-4


def three_point_fixtures():
    rng = np.random.default_rng(11)
    out = []
    for _ in range(8):
        X = rng.normal(size=(3, rng.integers(1, 4)))
        y = rng.normal(scale=2.0, size=3)
        out.append((X, y, float(rng.choice([0.5, 2.0, 10.0])), float(rng.choice([0.0, 0.1, 0.5]))))
    return out


@pytest.mark.parametrize("kind", [GAUSSIAN, NORMALIZED])
@pytest.mark.parametrize("fixture", three_point_fixtures())
def test_three_point_against_grid_oracle(fixture, kind):
    X, y, C, eps = fixture
    K = kernel_matrix(X, kind, 1.0)
    beta, viol, _ = solve_dual(K, y, C, eps)
    _, ref_val = grid_search_dual(K, y, C, eps)
    assert dual_value(K, y, beta, eps) == pytest.approx(ref_val, abs=1e-3)
    assert viol <= 1e-4


def test_solver_respects_box():
    X, y = two_point()
    K = kernel_matrix(X, GAUSSIAN, 1.0)
    beta, viol, _ = solve_dual(K, 10 * y, C=0.5, epsilon=0.0)
    np.testing.assert_array_equal(beta, [0.5, -0.5])
    assert viol == 0.0


def test_solver_cap_raises_with_best_violation():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 2))
    K = kernel_matrix(X, GAUSSIAN, 1.0)
    with pytest.raises(ConvergenceError) as err:
        solve_dual(K, rng.normal(size=30), 10.0, 0.01, tolerance=1e-12, max_iter=3)
    assert err.value.violation > 0
    assert err.value.beta.shape == (30,)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solver_deterministic(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(15, 2))
    y = rng.normal(size=15)
    K = kernel_matrix(X, GAUSSIAN, 1.0)
    a = solve_dual(K, y, 3.0, 0.05, seed=seed)[0]
    b = solve_dual(K, y, 3.0, 0.05, seed=seed)[0]
    assert np.array_equal(a, b)


# --- train / predict ----------------------------------------------------------------


def sine_fixture(n=20, seed=0):
    rng = np.random.default_rng(seed)
    X = np.sort(rng.uniform(-3, 3, n))[:, None]
    return X, np.sin(X[:, 0])


def test_train_two_points_opposite_betas():
    X, y = two_point()
    cfg = SvrConfig(C=100.0, epsilon=0.1)
    m = train_svr(X, y, cfg)
    assert m.kernel_kind == NORMALIZED and m.bias == 0 and m.offset == 0
    assert m.n_sv == 2 and m.beta[0] == -m.beta[1] and m.beta[0] > 0
    K = kernel_matrix(X, NORMALIZED, 1.0)
    ref, _ = grid_search_dual(K, y, 100.0, 0.1)
    preds = predict_svr_many(m, X)
    np.testing.assert_allclose(preds, K @ ref, atol=1e-3)
    np.testing.assert_allclose(preds, [0.9, -0.9], atol=1e-9)


def test_constant_targets_give_trivial_model():
    X = np.random.default_rng(1).normal(size=(12, 3))
    cfg = SvrConfig(epsilon=0.1)
    m = train_svr(X, np.full(12, 4.2), cfg)
    assert m.trivial and m.n_sv == 0
    assert predict_svr(m, X[0]) == pytest.approx(4.2, abs=1e-14)
    assert kkt_report(m, X, np.full(12, 4.2), cfg) == 0.0


def test_train_rejects_bad_input():
    with pytest.raises(DataError):
        train_svr([[0.0]], [1.0])
    with pytest.raises(DataError):
        train_svr([[0.0], [np.nan]], [1.0, 2.0])


@pytest.mark.parametrize("kind", [GAUSSIAN, NORMALIZED])
def test_sine_fixture_kkt_and_tube(kind):
    X, y = sine_fixture()
    cfg = SvrConfig(C=10.0, epsilon=0.05, sigma=1.0)
    m = train_svr(X, y, cfg, kernel_kind=kind)
    assert m.solver_violation <= cfg.tolerance
    assert np.all(np.abs(m.beta) <= cfg.C)
    assert abs(m.beta.sum()) <= cfg.tolerance
    assert np.all(m.beta != 0)
    if kind == GAUSSIAN:
        assert kkt_report(m, X, y, cfg) <= cfg.tolerance
        # independent KKT check: with the equality multiplier mu, every point
        # inside the tube has beta = 0 and every point outside is at the bound
        K = kernel_matrix(X, GAUSSIAN, 1.0)
        beta = np.zeros(len(y))
        rows = {tuple(r): i for i, r in enumerate(X.tolist())}
        for sv, b in zip(m.support_vectors.tolist(), m.beta):
            beta[rows[tuple(sv)]] = b
        resid = K @ beta - (y - m.offset)
        free = (np.abs(beta) > 0) & (np.abs(beta) < cfg.C)
        mu = np.median(resid[free] + cfg.epsilon * np.sign(beta[free]))
        shifted = resid - mu
        assert np.all(np.abs(shifted) <= cfg.epsilon + 1e-3)


def test_kkt_report_flags_box_violation():
    X, y = sine_fixture()
    cfg = SvrConfig()
    m = train_svr(X, y, cfg, kernel_kind=GAUSSIAN)
    bad = SvrModel(m.support_vectors, m.beta * 0 + np.where(m.beta > 0, 2 * cfg.C, -2 * cfg.C),
                   m.sigmas, GAUSSIAN, m.offset)
    assert kkt_report(bad, X, y, cfg) > 0


def test_predict_single_sv_is_constant():
    m = SvrModel([[0.0, 0.0]], [0.7], [1.0], NORMALIZED, offset=1.5)
    for x in ([0.0, 0.0], [10.0, -3.0], [1e3, 1e3]):
        assert predict_svr(m, x) == pytest.approx(2.2, abs=1e-15)


def test_predict_at_isolated_sv():
    sv = np.array([[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]])
    m = SvrModel(sv, [0.4, -0.1, -0.3], [1.0, 1.0, 1.0], NORMALIZED, offset=0.25)
    # other centers sit 20 sigma away; exp(-200) is far below 1e-6
    assert predict_svr(m, [0.0, 0.0]) == pytest.approx(0.65, abs=1e-6)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_normalized_prediction_is_convex_combination(seed):
    rng = np.random.default_rng(seed)
    l, d = rng.integers(1, 8), rng.integers(1, 4)
    m = SvrModel(rng.normal(size=(l, d)), rng.normal(size=l), rng.uniform(0.3, 2, l), NORMALIZED, rng.normal())
    preds = predict_svr_many(m, rng.normal(size=(20, d)) * 3)
    assert np.all(preds >= m.beta.min() + m.offset - 1e-12)
    assert np.all(preds <= m.beta.max() + m.offset + 1e-12)


def test_predict_far_query_takes_nearest_center():
    m = SvrModel([[0.0], [10.0]], [1.0, -1.0], [0.01, 0.01], NORMALIZED, offset=0.5)
    assert predict_svr(m, [1e4]) == 0.5 - 1.0
    assert predict_svr(m, [-1e4]) == 0.5 + 1.0


def test_predict_dimension_mismatch():
    m = SvrModel([[0.0, 0.0]], [0.7], [1.0])
    with pytest.raises(ParameterError):
        predict_svr(m, [1.0])


def test_require_normalized():
    m = SvrModel([[0.0]], [0.7], [1.0], GAUSSIAN)
    with pytest.raises(ContractError):
        require_normalized(m)


def test_config_validation():
    for bad in (dict(C=0), dict(epsilon=-1), dict(sigma=0), dict(tolerance=0)):
        with pytest.raises(ParameterError):
            SvrConfig(**bad)
