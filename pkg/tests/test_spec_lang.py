import numpy as np
import pytest

from ubf.fields import ScalarField
from ubf.spec_lang import (ConstraintLeaf, Op, SpecExpr, SpecParseError, crisp_fold, exact_membership,
                           level_decomposition, parse_spec)

U, I = Op.UNION, Op.INTERSECTION


def leaf(name, i, kind="state"):
    return ConstraintLeaf(name, kind, ScalarField(lambda x, u, i=i: x[..., i], depends="x"))


def registry(*names):
    return {n: leaf(n, k) for k, n in enumerate(names)}


def test_example_specification_levels():
    reg = registry("S1", "S2", "S3", "S4", "S5", "S6", "U1", "U2")
    spec = parse_spec("S1 | S2 & S3 & S4 & S5 | S6 & U1 | U2", reg)
    assert spec.union_indices == {1, 5, 7}
    assert spec.intersection_indices == {2, 3, 4, 6}
    assert spec.n_levels == 5


def test_single_leaf_has_no_runs():
    spec = parse_spec("S1", registry("S1"))
    assert spec.n_leaves == 1 and spec.ops == () and spec.n_levels == 0


def test_double_operator_reports_position():
    with pytest.raises(SpecParseError) as exc:
        parse_spec("S1 | | S2", registry("S1", "S2"))
    assert exc.value.position == 5


@pytest.mark.parametrize("text", ["", "   ", "S1 |", "| S1", "S1 S2", "S1 + S2", "S9"])
def test_malformed_inputs(text):
    with pytest.raises(SpecParseError):
        parse_spec(text, registry("S1", "S2"))


def test_stability_leaf_rejected_in_text_and_appended():
    st = ConstraintLeaf("V", "stability", ScalarField(lambda x, u: x[..., 0], depends="x"))
    reg = registry("S1")
    reg["V"] = st
    with pytest.raises(SpecParseError):
        parse_spec("S1 & V", reg)
    spec = parse_spec("S1", registry("S1"), stability=st)
    assert spec.ops == (I,) and spec.leaves[-1] is st


def test_level_decomposition_cases():
    assert level_decomposition([U, I, I, I, U, I, U]) == [(U, (1,)), (I, (2, 3, 4)), (U, (5,)), (I, (6,)), (U, (7,))]
    assert level_decomposition([U, I, I, I, U, U]) == [(U, (1,)), (I, (2, 3, 4)), (U, (5, 6))]
    assert level_decomposition([]) == []


def test_render_roundtrip():
    reg = registry("A", "B", "C")
    spec = parse_spec("A|B&C", reg)
    assert parse_spec(spec.render(), reg).ops == spec.ops


def test_relative_degree_validation():
    with pytest.raises(ValueError):
        ConstraintLeaf("U1", "input", ScalarField(lambda x, u: u[..., 0]), relative_degree=2)
    with pytest.raises(ValueError):
        ConstraintLeaf("S", "bogus", ScalarField(lambda x, u: x[..., 0]))
    with pytest.raises(ValueError):
        SpecExpr((leaf("A", 0),), (U,))


@pytest.mark.parametrize("text,vals,expected", [
    ("S1 | S2", (-1, 1), True),
    ("S1 & S2", (-1, 1), False),
    # left fold: (true or false) and true
    ("S1 | S2 & S3", (1, -1, 1), True),
    ("S1 | S2 & S3", (1, 1, -1), False),
])
def test_exact_membership(text, vals, expected):
    spec = parse_spec(text, registry("S1", "S2", "S3"))
    assert exact_membership(spec, np.array(vals, float), np.zeros(0)) is expected


def test_membership_matches_crisp_sign():
    rng = np.random.default_rng(0)
    spec = parse_spec("S1 | S2 & S3 | S4", registry("S1", "S2", "S3", "S4"))
    X = rng.uniform(-1, 1, size=(500, 4))
    crisp = crisp_fold(spec.ops, X.T)
    for x, c in zip(X, crisp):
        assert exact_membership(spec, x, np.zeros(0)) == (c >= 0)


def test_membership_dimension_check():
    f = ScalarField(lambda x, u: x[..., 0], depends="x")
    f.n_x = 3
    spec = SpecExpr((ConstraintLeaf("A", "state", f),))
    with pytest.raises(ValueError):
        exact_membership(spec, np.zeros(2), np.zeros(0))
