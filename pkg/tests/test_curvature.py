import numpy as np
import pytest

from bachlab.chart import BUILTIN_NAMES, builtin, product, scaled
from bachlab.curvature import (
    CovariantDerivative, DimensionError, NodeBudgetWarning, check_node_budget, christoffel,
    covariant_derivative, curvature, divergence, gaussian_curvature, riemann, ricci_scalar, weyl,
)
from bachlab.expr import ZERO, differentiate
from bachlab.soliton import hessian
from bachlab.tape import Tape
from bachlab.tensor import TensorField, evaluate_fields, kulkarni_nomizu

from _oracles import fd_christoffel, fd_riemann, fd_scalar, metric_function

FOUR = ["S2H2", "R2H2", "R2S2", "S2S2"]


def vals(t, c, pts):
    return t.evaluate(c.names(), c.inputs(pts)).values


def scalar_vals(e, c, pts):
    return Tape([e], c.names())(c.inputs(pts))[:, 0]


# -- finite-difference oracle --------------------------------------------------

@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_matches_finite_difference_pipeline(name):
    c = builtin(name)
    g = metric_function(c)
    pts = c.random_points(5, seed=21)
    G = vals(christoffel(c).as_field(), c, pts)
    R = vals(riemann(c), c, pts)
    r = scalar_vals(ricci_scalar(c)[1], c, pts)
    for k, p in enumerate(pts):
        scale = max(1.0, np.max(np.abs(R[k])))
        np.testing.assert_allclose(fd_christoffel(g, p), G[k], rtol=1e-5, atol=1e-5 * max(1, np.abs(G[k]).max()))
        np.testing.assert_allclose(fd_riemann(g, p), R[k], rtol=1e-5, atol=1e-5 * scale)
        assert fd_scalar(g, p) == pytest.approx(r[k], rel=1e-5, abs=1e-5)


def test_random_metric_against_oracle():
    # a generic non-diagonal metric exercises every term of the pipeline
    from bachlab.chart import Chart
    from bachlab.parse import parse

    e = lambda t: parse(t, ("p", "q"))  # noqa: E731
    c = Chart("warped", ("p", "q"), ((e("2 + p^2*q^2"), e("p*q/3")), (e("p*q/3"), e("exp(p)"))))
    g = metric_function(c)
    pts = c.random_points(5, seed=8)
    R = vals(riemann(c), c, pts)
    for k, p in enumerate(pts):
        np.testing.assert_allclose(fd_riemann(g, p), R[k], rtol=1e-5, atol=1e-6)


# -- printed tables and hand values -------------------------------------------

def test_hyperbolic_christoffels():
    c = builtin("H2")
    G = christoffel(c).gamma
    assert G[1, 0, 0] is c.parse("1/y")
    assert G[0, 0, 1] is c.parse("-1/y") and G[0, 1, 0] is G[0, 0, 1]
    assert G[1, 1, 1] is c.parse("-1/y")
    assert G[0, 0, 0] is ZERO and G[0, 1, 1] is ZERO and G[1, 0, 1] is ZERO


def test_flat_plane_christoffels():
    assert all(e is ZERO for e in christoffel(builtin("R2")).gamma.reshape(-1))


def test_gaussian_curvature():
    assert scalar_vals(gaussian_curvature(builtin("S2_round")), builtin("S2_round"), [[0, 0]])[0] == pytest.approx(1)
    assert scalar_vals(gaussian_curvature(builtin("H2")), builtin("H2"), [[0, 1]])[0] == pytest.approx(-1)
    with pytest.raises(DimensionError):
        gaussian_curvature(builtin("S2H2"))


@pytest.mark.parametrize("name, r0", [("S2_round", 2), ("H2", -2), ("R2", 0), ("S2H2", 0),
                                      ("R2H2", -2), ("R2S2", 2), ("S2S2", 4)])
def test_scalar_curvature(name, r0):
    c = builtin(name)
    np.testing.assert_allclose(scalar_vals(ricci_scalar(c)[1], c, c.random_points(20)), r0, atol=1e-9)


def test_flat_four_space_is_flat():
    c = product(builtin("R2"), builtin("R2"))
    assert all(e is ZERO for e in riemann(c).flat())
    assert all(e is ZERO for e in weyl(c).flat())


# -- identities --------------------------------------------------------------

@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_riemann_symmetries_and_bianchi(name):
    c = builtin(name)
    R = vals(riemann(c), c, c.random_points(6, seed=5))
    np.testing.assert_allclose(R, -R.transpose(0, 2, 1, 3, 4), atol=1e-10)
    np.testing.assert_allclose(R, -R.transpose(0, 1, 2, 4, 3), atol=1e-10)
    np.testing.assert_allclose(R, R.transpose(0, 3, 4, 1, 2), atol=1e-10)
    np.testing.assert_allclose(R + R.transpose(0, 1, 3, 4, 2) + R.transpose(0, 1, 4, 2, 3), 0, atol=1e-10)


@pytest.mark.parametrize("name", ["S2_round", "H2", "R2"])
def test_constant_curvature_riemann_is_half_kn(name):
    c = builtin(name)
    K = {"S2_round": 1, "H2": -1, "R2": 0}[name]
    g = c.metric_field()
    pts = c.inputs(c.random_points(6))
    R, GG = evaluate_fields([riemann(c), kulkarni_nomizu(g, g)], c.names(), pts)
    np.testing.assert_allclose(R, K * 0.5 * GG, atol=1e-10)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_metric_compatibility(name):
    c = builtin(name)
    Dg = covariant_derivative(c.metric_field(), christoffel(c))
    assert np.max(np.abs(vals(Dg, c, c.random_points(5)))) < 1e-10


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_contracted_bianchi(name):
    c = builtin(name)
    S, r = ricci_scalar(c)
    divS = divergence(S, christoffel(c), c.inverse_metric())
    half_dr = TensorField.build(c.dim, "l", lambda idx: differentiate(r, c.coords[idx[0]]) / 2)
    pts = c.random_points(6)
    np.testing.assert_allclose(vals(divS, c, pts), vals(half_dr, c, pts), atol=1e-8)


def test_contracted_bianchi_nonconstant_curvature():
    # the unsquared sphere chart has non-constant r, so dr is a real test
    c = product(builtin("S2_paper"), builtin("H2"))
    S, r = ricci_scalar(c)
    pts = c.random_points(6)
    dr = np.array([scalar_vals(differentiate(r, x), c, pts) for x in c.coords]).T
    assert np.max(np.abs(dr)) > 1e-3
    divS = vals(divergence(S, christoffel(c), c.inverse_metric()), c, pts)
    np.testing.assert_allclose(divS, dr / 2, atol=1e-8)


def test_divergence_of_metric_vanishes():
    c = builtin("S2H2")
    d = divergence(c.metric_field(), christoffel(c), c.inverse_metric())
    assert np.max(np.abs(vals(d, c, c.random_points(5)))) < 1e-12


@pytest.mark.parametrize("name", FOUR)
def test_weyl_is_trace_free_with_riemann_symmetries(name):
    c = builtin(name)
    pts = c.random_points(8, seed=6)
    W = vals(weyl(c), c, pts)
    Gi = vals(c.inverse_metric(), c, pts)
    np.testing.assert_allclose(np.einsum("mac,mabcd->mbd", Gi, W), 0, atol=1e-10)
    np.testing.assert_allclose(W, -W.transpose(0, 2, 1, 3, 4), atol=1e-10)
    np.testing.assert_allclose(W, W.transpose(0, 3, 4, 1, 2), atol=1e-10)


def test_weyl_vanishes_on_conformally_flat_product():
    c = builtin("S2H2")
    assert np.max(np.abs(vals(weyl(c), c, c.random_points(20)))) < 1e-8


def test_weyl_nonzero_on_r2s2():
    c = builtin("R2S2")
    assert np.max(np.abs(vals(weyl(c), c, c.random_points(5)))) > 0.1


def test_weyl_vanishes_under_conformal_rescaling():
    # W is conformally invariant (as a (1,3) tensor), so a conformally flat
    # metric e^{2φ}δ on R^4 must have W = 0
    flat = product(builtin("R2"), builtin("R2"))
    c = scaled(flat, flat.parse("exp(s/3 + t2^2/5)"), "conf")
    assert np.max(np.abs(vals(weyl(c), c, c.random_points(5)))) < 1e-9


def test_weyl_needs_four_dimensions():
    with pytest.raises(DimensionError):
        weyl(builtin("H2"))


def test_curvature_bundle():
    b = curvature(builtin("H2"))
    assert b.weyl is None and b.riemann.variance == "llll"
    assert curvature(builtin("S2H2")).weyl is not None


# -- covariant derivatives -----------------------------------------------------

def test_hessian_of_log_on_h2():
    c = builtin("H2")
    H = vals(hessian(c.parse("ln(y)"), c), c, [[0.0, 1.0]])[0]
    assert H[0, 0] == pytest.approx(-1) and abs(H[1, 1]) < 1e-15 and abs(H[0, 1]) < 1e-15


def test_hessian_on_flat_plane():
    c = builtin("R2")
    H = hessian(c.parse("s^2 + t^2"), c)
    assert H[0, 0] is c.parse("2") and H[0, 1] is ZERO


def test_iterated_covariant_derivative_is_lazy_and_memoised():
    c = builtin("S2H2")
    D1 = CovariantDerivative.of(riemann(c), christoffel(c))
    D2 = CovariantDerivative(D1.__getitem__, D1.variance, christoffel(c))
    a = D2[0, 1, 0, 1, 2, 3]
    assert D2[0, 1, 0, 1, 2, 3] is a
    assert len(D2._memo) == 1


def test_ricci_identity_for_one_form():
    # ∇_a∇_b ω_c - ∇_b∇_a ω_c = -R^d_cab ω_d
    c = builtin("S2H2")
    conn = christoffel(c)
    w = TensorField.build(4, "l", lambda idx: c.parse(["v", "u*y", "x", "1/y"][idx[0]]))
    D1 = CovariantDerivative.of(w, conn)
    D2 = CovariantDerivative(D1.__getitem__, D1.variance, conn).materialize()
    pts = c.random_points(4)
    ddw = vals(D2, c, pts)
    R = vals(riemann(c), c, pts)
    Gi = vals(c.inverse_metric(), c, pts)
    wv = vals(w, c, pts)
    lhs = ddw - ddw.transpose(0, 2, 1, 3)
    # R[d,c,a,b] = g_dm R^m_cab so R^m_cab ω_m = g^md R[d,c,a,b] ω_m
    rhs = -np.einsum("pmd,pdcab,pm->pabc", Gi, R, wv)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_node_budget_warning():
    c = builtin("H2")
    with pytest.warns(NodeBudgetWarning):
        check_node_budget(riemann(c).flat(), "riemann", budget=1)
