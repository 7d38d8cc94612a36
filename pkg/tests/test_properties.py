"""Randomized properties driven by hypothesis."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from ubf.lse_compose import compose, fold_values
from ubf.props import coordinate_leaf
from ubf.qpsolve import solve_halfspace
from ubf.spec_lang import Op, SpecExpr, crisp_fold, parse_spec

vals = st.floats(-50.0, 50.0, allow_nan=False)
ops_st = st.lists(st.sampled_from([Op.UNION, Op.INTERSECTION]), min_size=0, max_size=6)


@settings(max_examples=200, deadline=None)
@given(ops=ops_st, data=st.data(), beta=st.floats(0.1, 1e3))
def test_composed_value_sandwich(ops, data, beta):
    n = len(ops) + 1
    v = np.array(data.draw(st.lists(vals, min_size=n, max_size=n)))
    spec = SpecExpr(tuple(coordinate_leaf(i, n) for i in range(n)), tuple(ops))
    h = float(compose(spec, beta).value(v, np.zeros(0)))
    crisp = float(crisp_fold(ops, v))
    assert h <= crisp + 1e-9
    assert crisp - h <= len(ops) * np.log(2.0) / beta + 1e-9


@settings(max_examples=200, deadline=None)
@given(ops=ops_st, data=st.data(), shift=vals, beta=st.floats(0.1, 100.0))
def test_fold_is_shift_equivariant(ops, data, shift, beta):
    n = len(ops) + 1
    v = np.array(data.draw(st.lists(vals, min_size=n, max_size=n)))
    a = fold_values(ops, v, beta)
    b = fold_values(ops, v + shift, beta)
    assert abs(float(b - a) - shift) <= 1e-9 * max(1.0, abs(shift))


@settings(max_examples=200, deadline=None)
@given(p=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6), q=st.floats(-1e3, 1e3))
def test_halfspace_projection_kkt(p, q):
    p = np.array(p)
    if np.linalg.norm(p) < 1e-6:
        return
    v = solve_halfspace(p, q)
    # feasible, and v is a non-negative multiple of p
    assert p @ v + q >= -1e-9 * max(1.0, abs(q))
    lam = (p @ v) / (p @ p)
    assert lam >= -1e-15
    np.testing.assert_allclose(v, lam * p, atol=1e-12 * max(1.0, np.abs(v).max()))
    if q >= 0:
        assert np.all(v == 0)


@settings(max_examples=100, deadline=None)
@given(names=st.lists(st.sampled_from(["A", "B", "C", "D"]), min_size=1, max_size=6),
       ops=st.lists(st.sampled_from(["|", "&"]), min_size=5, max_size=5))
def test_parse_render_roundtrip(names, ops):
    from ubf.cli import _placeholder_registry

    text = names[0] + "".join(f" {o} {n}" for o, n in zip(ops, names[1:]))
    spec = parse_spec(text, _placeholder_registry(text))
    again = parse_spec(spec.render(), _placeholder_registry(text))
    assert again.ops == spec.ops
    assert [l.id for l in again.leaves] == [l.id for l in spec.leaves]
