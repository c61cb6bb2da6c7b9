import numpy as np
import pytest
from hypothesis import given, strategies as st

from bachlab.bach import OmegaBachSpec
from bachlab.chart import builtin
from bachlab.expr import num
from bachlab.parse import parse
from bachlab.tensor import (
    TensorField, VarianceError, contract, evaluate_fields, kulkarni_nomizu, lower_index,
    raise_lower, tensor_product, trace_with_metric,
)

H2 = builtin("H2")
PTS = H2.random_points(6, seed=11)
X = H2.inputs(PTS)

coef = st.integers(-3, 3)
monomials = ["1", "x", "y", "x*y", "x^2", "y^2", "1/y"]


@st.composite
def scalar(draw):
    cs = draw(st.lists(coef, min_size=len(monomials), max_size=len(monomials)))
    return H2.parse(" + ".join(f"({c})*{m}" for c, m in zip(cs, monomials)))


@st.composite
def field(draw, variance, symmetric=False):
    n = 2
    comps = {}
    for idx in np.ndindex(*(n,) * len(variance)):
        key = tuple(sorted(idx)) if symmetric else idx
        if key not in comps:
            comps[key] = draw(scalar())
    return TensorField.build(n, variance,
                             lambda idx: comps[tuple(sorted(idx)) if symmetric else idx])


def values(t):
    return t.evaluate(H2.names(), X).values


def test_identity_contracts_to_dimension():
    delta = TensorField.build(4, "ul", lambda idx: num(int(idx[0] == idx[1])))
    c = contract(delta, 0, 1)
    assert c.rank == 0 and c[()] is num(4)


def test_metric_times_inverse_is_identity():
    c = builtin("S2H2")
    mixed = contract(tensor_product(c.metric_field(), c.inverse_metric()), 1, 2)
    v = mixed.evaluate(c.names(), c.inputs(c.random_points(5))).values
    np.testing.assert_allclose(v, np.broadcast_to(np.eye(4), v.shape), atol=1e-12)


def test_double_contraction_of_sphere_riemann():
    from bachlab.curvature import riemann

    c = builtin("S2_round")
    R = riemann(c)
    up = raise_lower(raise_lower(R, 0, c.metric_field(), c.inverse_metric()), 1,
                     c.metric_field(), c.inverse_metric())
    r = contract(contract(up, 0, 2), 0, 1)
    pts = c.random_points(5)
    np.testing.assert_allclose(r.evaluate(c.names(), c.inputs(pts)).values, 2.0, atol=1e-12)


def test_contraction_errors():
    t = TensorField.zeros(2, "ll")
    with pytest.raises(VarianceError):
        contract(t, 0, 1)
    with pytest.raises(IndexError):
        contract(TensorField.zeros(2, "ul"), 0, 5)
    with pytest.raises(VarianceError):
        contract(TensorField.zeros(2, "ul"), 1, 1)


@given(field("ulu"))
def test_contract_commutes_with_evaluation(t):
    a = contract(t, 0, 1).evaluate(H2.names(), X)
    b = t.evaluate(H2.names(), X).contract(0, 1)
    np.testing.assert_allclose(a.values, b.values, rtol=1e-12, atol=1e-12)


@given(field("ll"))
def test_raise_then_lower_is_identity(t):
    g, gi = H2.metric_field(), H2.inverse_metric()
    back = raise_lower(raise_lower(t, 1, g, gi), 1, g, gi)
    np.testing.assert_allclose(values(back), values(t), rtol=1e-12, atol=1e-12)


def test_lower_vector_on_h2():
    P = TensorField(np.array([num(1), num(0)], dtype=object), "u")
    w = lower_index(P, 0, H2.metric_field())
    v = w.evaluate(H2.names(), H2.inputs([[0.0, 2.0]])).values[0]
    np.testing.assert_allclose(v, [0.25, 0.0])


def test_raise_on_flat_plane_is_identity():
    r2 = builtin("R2")
    w = TensorField(np.array([r2.parse("s*t"), r2.parse("3")], dtype=object), "l")
    up = raise_lower(w, 0, r2.metric_field(), r2.inverse_metric())
    assert up.variance == "u" and list(up.flat()) == list(w.flat())


def test_kn_on_flat_plane():
    g = builtin("R2").metric_field()
    assert kulkarni_nomizu(g, g)[0, 1, 0, 1] is num(2)


def test_kn_rejects_wrong_variance():
    with pytest.raises(VarianceError):
        kulkarni_nomizu(TensorField.zeros(2, "ul"), TensorField.zeros(2, "ll"))


@given(field("ll", symmetric=True), field("ll", symmetric=True))
def test_kn_symmetries(h, k):
    hk = values(kulkarni_nomizu(h, k))
    np.testing.assert_allclose(hk, values(kulkarni_nomizu(k, h)), atol=1e-10)
    np.testing.assert_allclose(hk, -hk.transpose(0, 2, 1, 3, 4), atol=1e-10)
    np.testing.assert_allclose(hk, -hk.transpose(0, 1, 2, 4, 3), atol=1e-10)
    np.testing.assert_allclose(hk, hk.transpose(0, 3, 4, 1, 2), atol=1e-10)
    bianchi = hk + hk.transpose(0, 1, 3, 4, 2) + hk.transpose(0, 1, 4, 2, 3)
    np.testing.assert_allclose(bianchi, 0, atol=1e-10)


def test_half_gg_is_sphere_riemann():
    from bachlab.curvature import riemann

    c = builtin("S2_round")
    g = c.metric_field()
    pts = c.inputs(c.random_points(8))
    a, b = evaluate_fields([kulkarni_nomizu(g, g).scale(num(1) / 2), riemann(c)], c.names(), pts)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_traces():
    c = builtin("R2H2")
    assert trace_with_metric(c.metric_field(), c.inverse_metric()) is num(4)
    # unit g-norm P at y = 1: P = (0, 0, 0, 1)
    spec = OmegaBachSpec(1, (0, 0, 0, 1))
    w = spec.omega(c)
    tr = trace_with_metric(tensor_product(w, w), c.inverse_metric())
    v = TensorField.scalar(tr).evaluate(c.names(), c.inputs([[0, 0, 0, 1.0]])).values
    assert v[0] == pytest.approx(1.0)


def test_trace_of_omega_bach_on_s2h2():
    from bachlab.bach import omega_bach

    c = builtin("S2H2")
    spec = OmegaBachSpec(2, (1, 0, 0, 0))
    tr = trace_with_metric(omega_bach(c, spec), c.inverse_metric())
    pts = c.random_points(5, seed=2)
    got = TensorField.scalar(tr).evaluate(c.names(), c.inputs(pts)).values
    norm = TensorField.scalar(spec.norm_squared(c)).evaluate(c.names(), c.inputs(pts)).values
    np.testing.assert_allclose(got, -2 * norm, atol=1e-8)


def test_tensor_value_symmetry_flag():
    t = TensorField.build(2, "ll", lambda idx: H2.parse("x*y"))
    assert t.evaluate(H2.names(), X).is_symmetric(0, 1)
    t2 = TensorField.build(2, "ll", lambda idx: H2.parse("x") if idx == (0, 1) else H2.parse("y"))
    assert not t2.evaluate(H2.names(), X).is_symmetric(0, 1)


def test_variance_checks():
    with pytest.raises(VarianceError):
        TensorField(np.zeros((2, 2), dtype=object), "l")
    with pytest.raises(VarianceError):
        TensorField.zeros(2, "ll") + TensorField.zeros(2, "lu")
    with pytest.raises(VarianceError):
        lower_index(TensorField.zeros(2, "l"), 0, H2.metric_field())


def test_arithmetic():
    a = TensorField.build(2, "l", lambda idx: parse("x", ["x"]))
    b = (a + a - a).scale(3)
    assert b[0] is parse("3*x", ["x"])
