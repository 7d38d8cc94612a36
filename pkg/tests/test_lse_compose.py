import numpy as np
import pytest

from ubf.config import load_config
from ubf.fields import ClassKappa, ScalarField
from ubf.lse_compose import (CompositionError, compose, correction_factor, fold_values, qp_data, softmax_pair,
                             softmin_pair)
from ubf.props import coordinate_leaf
from ubf.spec_lang import ConstraintLeaf, Op, SpecExpr, crisp_fold
from ubf.systems import single_integrator

U, I = Op.UNION, Op.INTERSECTION


def coord_spec(ops):
    n = len(ops) + 1
    return SpecExpr(tuple(coordinate_leaf(i, n) for i in range(n)), tuple(ops))


def h_at(spec, beta, vals):
    return float(compose(spec, beta).value(np.asarray(vals, float), np.zeros(0)))


def test_pair_operations_are_stable_for_large_arguments():
    v, w = softmax_pair(1e4, 1e4 - 1.0, 10.0)
    assert np.isfinite(v) and v == pytest.approx(1e4 + np.log1p(np.exp(-10.0)) / 10.0)
    v, w = softmin_pair(-1e4, 0.0, 10.0)
    assert v == pytest.approx(-1e4) and w == pytest.approx(1.0)


def test_two_leaf_union_at_tie_is_exact():
    assert h_at(coord_spec([U]), 10.0, [0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)


def test_two_leaf_intersection():
    h = h_at(coord_spec([I]), 10.0, [1.0, 1.0])
    assert h == pytest.approx(1 - np.log(2) / 10)
    assert h <= 1.0


@pytest.mark.parametrize("beta", [1.0, 10.0, 100.0])
def test_pure_union_sandwich(beta):
    rng = np.random.default_rng(int(beta))
    for n in range(2, 7):
        spec = coord_spec([U] * (n - 1))
        for _ in range(50):
            vals = rng.uniform(-3, 3, n)
            # one union run of length n-1 is corrected by ln(n)/beta
            h = h_at(spec, beta, vals)
            assert h <= vals.max() + 1e-12
            assert vals.max() - h <= np.log(n) / beta + 1e-12


def test_correction_per_union_run():
    spec = coord_spec([U, I, I, I, U, I, U])
    assert correction_factor(spec) == pytest.approx(1 / 8)
    assert correction_factor(coord_spec([U, U, I, U])) == pytest.approx(1 / 6)
    assert correction_factor(coord_spec([I, I])) == 1.0


def test_single_leaf_identity():
    spec = coord_spec([])
    ubf = compose(spec, 10.0)
    assert ubf.correction == 1.0
    assert h_at(spec, 10.0, [0.37]) == 0.37


def test_reference_start_is_safe(config_dir):
    cfg = load_config(config_dir / "single_integrator.json")
    ubf = compose(cfg.spec, cfg.beta)
    vals = ubf.leaf_values(cfg.x0, np.zeros(2))
    np.testing.assert_allclose(vals, [9.85, 1.0, 120.0])
    assert ubf.value(cfg.x0, np.zeros(2)) > 0


def test_gradient_is_convex_combination_for_intersections():
    rng = np.random.default_rng(3)
    spec = coord_spec([I, I, I])
    _, w = fold_values(spec.ops, rng.uniform(-2, 2, (4, 100)), 7.0, with_weights=True)
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-12)
    assert np.all(w >= 0)


def test_analytic_gradient_matches_central_differences(config_dir):
    cfg = load_config(config_dir / "single_integrator.json")
    ubf = compose(cfg.spec, cfg.beta)
    x, u = cfg.x0, np.zeros(2)
    h, gx, gu = ubf.evaluate(x, u)
    num = ScalarField(ubf.value)
    np.testing.assert_allclose(num.grad_x(x, u), gx, rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(num.grad_u(x, u), gu, rtol=1e-5, atol=1e-8)


def test_qp_data_state_only_spec_has_zero_p():
    spec = coord_spec([I])
    ubf = compose(spec, 10.0)
    qd = qp_data(ubf, single_integrator(), np.zeros(2), ClassKappa("linear", 1.0), np.array([1.0, 2.0]), np.zeros(2))
    np.testing.assert_array_equal(qd.p, [0.0, 0.0])


def test_qp_data_reference_start(config_dir):
    cfg = load_config(config_dir / "single_integrator.json")
    ubf = compose(cfg.spec, cfg.beta)
    qd = qp_data(ubf, cfg.system, np.array([5.0, -1.0]), ClassKappa("linear", 1.0), cfg.x0, np.zeros(2))
    np.testing.assert_allclose(qd.p, 0.0, atol=1e-15)
    # F = u = 0 and p = 0, so only the class-K term survives
    assert qd.q == pytest.approx(float(ubf.value(cfg.x0, np.zeros(2))))


def test_qp_data_isolated_class_k_term():
    const = ConstraintLeaf("C", "state", ScalarField(lambda x, u: np.full(np.shape(x)[:-1], 2.0),
                                                     grad_x=lambda x, u: np.zeros(np.shape(x)), depends="x"))
    ubf = compose(SpecExpr((const,)), 10.0)
    qd = qp_data(ubf, single_integrator(), np.zeros(2), ClassKappa("linear", 3.0), np.zeros(2), np.zeros(2))
    assert qd.q == 6.0


def test_non_finite_leaf_raises():
    bad = ConstraintLeaf("B", "state", ScalarField(lambda x, u: x[..., 0] * np.inf, depends="x"))
    with pytest.raises(CompositionError):
        compose(SpecExpr((bad,)), 1.0).value(np.ones(1), np.zeros(0))


def test_batched_evaluation_matches_pointwise():
    rng = np.random.default_rng(5)
    spec = coord_spec([U, I, U])
    ubf = compose(spec, 4.0)
    X = rng.normal(size=(10, 4))
    h, gx, _ = ubf.evaluate(X, np.zeros((10, 0)))
    for k in range(10):
        hk, gk, _ = ubf.evaluate(X[k], np.zeros(0))
        assert h[k] == pytest.approx(hk)
        np.testing.assert_allclose(gx[k], gk)
    assert np.all(h <= crisp_fold(spec.ops, X.T) + 1e-12)
