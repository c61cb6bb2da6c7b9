import numpy as np
import pytest

from bachlab.chart import BUILTIN_NAMES, Chart, ChartError, builtin, product, scaled
from bachlab.curvature import christoffel, riemann, ricci_scalar
from bachlab.expr import ZERO
from bachlab.tape import Tape


def test_hyperbolic_metric_value():
    h = builtin("H2")
    assert h.metric_at([[0.3, 2.0]])[0, 0, 0] == 0.25


def test_round_sphere_curvature_at_origin():
    c = builtin("S2_round")
    r = ricci_scalar(c)[1]
    assert Tape([r], c.names())(c.inputs([[0.0, 0.0]]))[0, 0] == pytest.approx(2.0)


def test_unsquared_sphere_christoffel():
    c = builtin("S2_paper")
    g = christoffel(c).gamma[0, 0, 0]
    assert Tape([g], c.names())(c.inputs([[1.0, 0.0]]))[0, 0] == pytest.approx(-0.5)


def test_flat_product_has_no_christoffels():
    c = product(builtin("R2"), builtin("R2"))
    assert c.coords == ("s", "t", "s2", "t2")
    assert all(e is ZERO for e in christoffel(c).gamma.reshape(-1))


def test_product_metric_block_diagonal():
    np.testing.assert_allclose(builtin("S2H2").metric_at([[0, 0, 0, 1.0]])[0], np.diag([4, 4, 1, 1]))


def test_product_scalar_curvature_is_additive():
    c = builtin("R2S2")
    r = ricci_scalar(c)[1]
    pts = c.random_points(10)
    np.testing.assert_allclose(Tape([r], c.names())(c.inputs(pts))[:, 0], 2.0, atol=1e-12)


def test_unknown_builtin():
    with pytest.raises(ChartError):
        builtin("T2")


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_positive_definite_on_samples(name):
    c = builtin(name)
    pts = c.random_points(100, seed=3)
    assert len(pts) == 100
    assert c.check_positive_definite(pts)


@pytest.mark.parametrize("name", ["S2H2", "R2H2", "R2S2", "S2S2"])
def test_mixed_block_riemann_vanishes(name):
    c = builtin(name)
    R = riemann(c).evaluate(c.names(), c.inputs(c.random_points(5))).values
    blocks = [0, 0, 1, 1]
    for idx in np.ndindex(4, 4, 4, 4):
        if len({blocks[i] for i in idx}) > 1:
            assert np.max(np.abs(R[(slice(None),) + idx])) < 1e-10


def test_grid_is_deterministic_and_inside_domain():
    c = builtin("H2")
    a, b = c.grid(25), c.grid(25)
    np.testing.assert_array_equal(a, b)
    assert len(a) == 25 and np.all(a[:, 1] > 0.1)
    np.testing.assert_array_equal(c.random_points(7, seed=4), c.random_points(7, seed=4))


def test_chart_validation():
    with pytest.raises(ChartError, match="symmetric"):
        Chart("bad", ("x", "y"), ((1, "x"), (0, 1)))
    with pytest.raises(ChartError, match="undeclared"):
        Chart("bad", ("x", "y"), (("z", 0), (0, 1)))
    with pytest.raises(ChartError, match="duplicate"):
        Chart("bad", ("x", "x"), ((1, 0), (0, 1)))


def test_inputs_require_bound_parameters():
    c = scaled(builtin("H2"), "a")
    assert c.params == ("a",)
    with pytest.raises(ChartError, match="unbound"):
        c.inputs([[0, 1.0]])
    np.testing.assert_allclose(c.metric_at([[0, 1.0]], {"a": 3})[0], 3 * np.eye(2))
