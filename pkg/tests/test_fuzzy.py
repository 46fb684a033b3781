import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from somfsvm.errors import ContractError, ParameterError
from somfsvm.fuzzy import (
    ADDITIVE,
    FuzzyRule,
    RefineConfig,
    RuleSet,
    export_rules,
    extract_rules,
    infer,
    infer_many,
    membership,
    parse_rules,
    refine_rules,
    rule_activation,
    rule_gradients,
    training_mse,
)
from somfsvm.svr import GAUSSIAN, SvrConfig, SvrModel, predict_svr_many, train_svr

from oracles import finite_difference, gauss

REFERENCE_R1 = (
    "R1: IF x1=Gaussmf(0.09,-0.11) and x2=Gaussmf(0.09,-0.12) and "
    "x3=Gaussmf(0.09,-0.04) and x4=Gaussmf(0.09,-0.10) and "
    "x5=Gaussmf(0.09,-0.09) THEN y=0.10"
)


def reference_r1():
    return FuzzyRule(np.array([-0.11, -0.12, -0.04, -0.10, -0.09]), np.full(5, 0.09), 0.10)


def random_ruleset(rng, m=None, d=None, offset=None):
    m = m or int(rng.integers(1, 6))
    d = d or int(rng.integers(1, 5))
    return RuleSet(
        rng.normal(size=(m, d)),
        rng.uniform(0.5, 2.0, size=(m, d)),
        rng.normal(size=m),
        rng.normal() if offset is None else offset,
    )


def test_membership_values():
    assert membership(1.3, 1.3, 0.4) == 1.0
    s = 0.7
    assert membership(2.0 + s * math.sqrt(2), 2.0, s) == pytest.approx(math.exp(-1), rel=1e-14)
    with pytest.raises(ParameterError):
        membership(0.0, 0.0, 0.0)
    grid = np.linspace(0, 5, 50)
    assert np.all(np.diff(membership(grid, 0.0, 1.3)) < 0)


def test_rule_activation():
    r = FuzzyRule(np.array([1.0, -2.0]), np.array([0.5, 2.0]), 0.0)
    assert rule_activation(r, [1.0, -2.0]) == 1.0
    x = [1.0 + 0.5 * math.sqrt(2), -2.0 - 2.0 * math.sqrt(2)]
    assert rule_activation(r, x) == pytest.approx(math.exp(-2), rel=1e-14)
    ref = gauss(0.3, 1.0, 0.5) * gauss(0.1, -2.0, 2.0)
    assert rule_activation(r, [0.3, 0.1]) == pytest.approx(ref, rel=1e-14)
    with pytest.raises(ParameterError):
        rule_activation(r, [1.0])


def test_single_rule_constant_consequent():
    rs = RuleSet.from_rules([reference_r1()], offset=0.5)
    rng = np.random.default_rng(0)
    for x in rng.normal(size=(10, 5)):
        assert infer(rs, x) == pytest.approx(0.60, abs=1e-15)


def test_two_rules_symmetric_point():
    rs = RuleSet([[-1.0, 0.0], [1.0, 0.0]], np.ones((2, 2)), [0.3, -0.9], offset=0.2)
    assert infer(rs, [0.0, 5.0]) == pytest.approx(0.2 + (0.3 - 0.9) / 2, abs=1e-15)


def test_inference_matches_hand_formula():
    rs = RuleSet([[0.0], [1.0]], [[1.0], [0.5]], [2.0, -1.0])
    x = 0.4
    w = [gauss(x, 0.0, 1.0), gauss(x, 1.0, 0.5)]
    assert infer(rs, [x]) == pytest.approx((2 * w[0] - w[1]) / sum(w), rel=1e-14)
    assert infer(rs, [x], mode=ADDITIVE) == pytest.approx(2 * w[0] - w[1], rel=1e-14)


def test_underflow_falls_back_to_strongest_rule():
    rs = RuleSet([[0.0], [10.0]], [[0.01], [0.01]], [1.0, -1.0], offset=0.5)
    # both activations underflow at x=1e4; the second center is closer
    assert infer(rs, [1e4]) == 0.5 - 1.0
    assert infer(rs, [-1e4]) == 0.5 + 1.0


def test_trivial_ruleset_returns_offset():
    rs = RuleSet.constant(1.25, dim=3)
    assert rs.trivial
    assert infer(rs, [9.0, 9.0, 9.0]) == 1.25


def test_extract_direct_mapping():
    m = SvrModel([[0.0, 1.0], [2.0, 3.0]], [0.3, -0.3], [0.8, 0.8], offset=0.1)
    rs = extract_rules(m)
    assert rs.n_rules == 2
    assert rs.consequents.tolist() == [0.3, -0.3]
    np.testing.assert_array_equal(rs.centers, m.support_vectors)
    np.testing.assert_array_equal(rs.widths, 0.8)
    assert rs.offset == 0.1 and rs.inference_mode == "normalized"


def test_extract_trivial_and_contract():
    m = SvrModel(np.zeros((0, 3)), [], [], offset=2.0)
    rs = extract_rules(m)
    assert rs.trivial and infer(rs, [0.0, 0.0, 0.0]) == 2.0
    with pytest.raises(ContractError):
        extract_rules(SvrModel([[0.0]], [1.0], [1.0], GAUSSIAN))


def trained_model(seed, n=None, d=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(10, 101))
    d = d or int(rng.integers(2, 6))
    X = rng.normal(size=(n, d))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1] ** 2 + 0.2 * rng.normal(size=n)
    cfg = SvrConfig(C=float(rng.choice([1.0, 10.0])), epsilon=0.05, sigma=float(rng.uniform(0.5, 2.0)))
    return train_svr(X, y, cfg), X, rng


@pytest.mark.parametrize("seed", range(5))
def test_extraction_equivalence(seed):
    model, X, rng = trained_model(seed)
    rs = extract_rules(model)
    assert rs.n_rules == model.n_sv
    Q = rng.uniform(X.min(0) - 1, X.max(0) + 1, size=(1000, X.shape[1]))
    diff = np.abs(infer_many(rs, Q) - predict_svr_many(model, Q))
    assert diff.max() <= 1e-10


def test_extraction_equivalence_far_from_data():
    model, X, rng = trained_model(3, n=40, d=3)
    rs = extract_rules(model)
    # responses underflow for every center out here
    far = rng.normal(size=(200, 3)) * 1e3
    np.testing.assert_array_equal(infer_many(rs, far), predict_svr_many(model, far))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_normalized_inference_bounded(seed):
    rng = np.random.default_rng(seed)
    rs = random_ruleset(rng)
    out = infer_many(rs, rng.normal(size=(30, rs.dim)) * 4)
    assert np.all(out >= rs.offset + rs.consequents.min() - 1e-12)
    assert np.all(out <= rs.offset + rs.consequents.max() + 1e-12)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_additive_rescaled_equals_normalized(seed):
    rng = np.random.default_rng(seed)
    rs = random_ruleset(rng)
    x = rng.normal(size=rs.dim)
    total = sum(rule_activation(r, x) for r in rs.rules)
    scaled = replace(rs, consequents=rs.consequents / total)
    assert infer(scaled, x, mode=ADDITIVE) == pytest.approx(infer(rs, x), rel=1e-10, abs=1e-12)


# --- refinement ---------------------------------------------------------------------


def loss_fn(rs, x, y, which):
    def f(theta):
        return 0.5 * (infer(replace(rs, **{which: theta}), x) - y) ** 2

    return f


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    rs = random_ruleset(rng, m=2, d=2)
    x, y = rng.normal(size=2), rng.normal()
    gc, gw = rule_gradients(rs, x, y)
    fc = finite_difference(loss_fn(rs, x, y, "centers"), rs.centers)
    fw = finite_difference(loss_fn(rs, x, y, "widths"), rs.widths)
    for a, b in ((gc, fc), (gw, fw)):
        rel = np.abs(a - b) / np.maximum(np.abs(b), 1e-8)
        assert rel.max() <= 1e-5, (a, b)


def sine_data(n=20, seed=0):
    rng = np.random.default_rng(seed)
    X = np.sort(rng.uniform(-3, 3, n))[:, None]
    return X, np.sin(X[:, 0])


def test_refine_reduces_mse_on_sine():
    X, y = sine_data()
    model = train_svr(X, y, SvrConfig(C=10.0, epsilon=0.05, sigma=1.0))
    rs = extract_rules(model)
    out = refine_rules(rs, X, y, RefineConfig(learning_rate=0.01, epochs=50))
    assert training_mse(out, X, y) <= training_mse(rs, X, y)
    np.testing.assert_array_equal(out.consequents, rs.consequents)


def test_refine_noop_cases():
    X, y = sine_data()
    rs = extract_rules(train_svr(X, y))
    assert refine_rules(rs, X, y, RefineConfig(epochs=0)) is rs
    assert refine_rules(rs, X, y, RefineConfig(learning_rate=0.0)) is rs
    with pytest.raises(ContractError):
        refine_rules(RuleSet.constant(0.0, 1), X, y, RefineConfig())


def test_refine_divergence_returns_best_epoch():
    X, y = sine_data()
    rs = extract_rules(train_svr(X, y))
    out = refine_rules(rs, X, y, RefineConfig(learning_rate=50.0, epochs=30, min_width=1e-3))
    assert training_mse(out, X, y) <= training_mse(rs, X, y)
    assert np.all(out.widths >= 1e-3)


# --- export ---------------------------------------------------------------------------


def test_export_reference_row():
    text = export_rules(RuleSet.from_rules([reference_r1()]))
    assert text == REFERENCE_R1 + "\n"
    assert " ".join(text.split()) == " ".join(REFERENCE_R1.split())


def test_export_trivial():
    text = export_rules(RuleSet.constant(0.25, 5))
    assert text.startswith("#") and "0.25" in text and len(text.splitlines()) == 1


def test_export_round_trip():
    rng = np.random.default_rng(4)
    rs = random_ruleset(rng, m=4, d=5, offset=0.0)
    back = parse_rules(export_rules(rs))
    np.testing.assert_array_equal(back.centers, np.round(rs.centers, 2) + 0.0)
    np.testing.assert_array_equal(back.widths, np.round(rs.widths, 2))
    np.testing.assert_array_equal(back.consequents, np.round(rs.consequents, 2) + 0.0)


def test_export_folds_offset_into_consequent():
    rs = RuleSet([[0.0]], [[1.0]], [0.25], offset=1.0)
    assert export_rules(rs).strip().endswith("THEN y=1.25")


def test_divergence_flag_after_three_rising_epochs(monkeypatch):
    import somfsvm.fuzzy as fz

    X, y = sine_data()
    rs = extract_rules(train_svr(X, y))
    seq = iter([1.0, 0.5, 0.6, 0.7, 0.8, 0.9])
    monkeypatch.setattr(fz, "training_mse", lambda *a: next(seq))
    out = fz.refine_rules(rs, X, y, RefineConfig(learning_rate=0.01, epochs=10))
    assert out.diverged
    # best epoch is the first one (MSE 0.5), not the input
    assert not np.array_equal(out.centers, rs.centers)
