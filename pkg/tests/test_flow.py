import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bachlab import flow
from bachlab.flow import FAMILIES, FlowError, FlowState, OracleMismatch, check_rhs, flow_rhs, integrate


def test_rhs_examples():
    assert flow_rhs(FlowState("R2xS2", (1, 1))) == pytest.approx((-2 / 3, 2 / 3))
    assert flow_rhs(FlowState("S2xH2", (1, 1))) == (0, 0)
    assert flow_rhs(FlowState("S2xS2", (1.7, 1.7))) == pytest.approx((0, 0), abs=1e-15)


@settings(max_examples=10)
@given(st.sampled_from(sorted(FAMILIES)), st.floats(0.3, 3), st.floats(0.3, 3))
def test_rhs_agrees_with_full_bach(family, p, q):
    assert check_rhs(FlowState(family, (p, q))) < 1e-7


def test_oracle_refuses_wrong_rhs(monkeypatch):
    monkeypatch.setattr(flow, "_rhs", lambda family, p, q: (0.0, 0.0))
    with pytest.raises(OracleMismatch):
        integrate(FlowState("R2xS2", (1, 1)), 1, 0.1)


def test_state_validation():
    with pytest.raises(FlowError):
        FlowState("T2xT2", (1, 1))
    with pytest.raises(FlowError):
        FlowState("R2xS2", (1, -1))
    with pytest.raises(FlowError):
        FlowState("R2xS2", (1, 1, 1))
    with pytest.raises(FlowError):
        integrate(FlowState("R2xS2", (1, 1)), 1, 0)
    with pytest.raises(FlowError):
        integrate(FlowState("R2xS2", (1, 1)), -1, 0.1)


def test_r2s2_closed_form():
    traj = integrate(FlowState("R2xS2", (1.3, 0.8)), 2.0, 1e-3)
    c, a = traj.scales.T
    assert np.max(np.abs(a**2 - 0.8**2 - 4 * traj.times / 3)) < 1e-6
    assert np.max(np.abs(c * a - 1.3 * 0.8)) < 1e-6
    assert traj.times[-1] == 2.0 and len(traj.times) == 2001


def test_r2h2_mirrors_r2s2():
    a = integrate(FlowState("R2xS2", (1, 2)), 1, 0.01).scales
    b = integrate(FlowState("R2xH2", (1, 2)), 1, 0.01).scales
    np.testing.assert_allclose(a, b, rtol=1e-14)


def test_s2h2_fixed_points_are_stationary():
    for s in (1.0, 2.0):
        traj = integrate(FlowState("S2xH2", (s, s)), 1.0, 0.01)
        assert np.max(np.abs(traj.scales - s)) < 1e-10


def test_rk4_order():
    def err(dt):
        traj = integrate(FlowState("R2xS2", (1.0, 1.0)), 2.0, dt, check=False)
        a = traj.scales[:, 1]
        return np.max(np.abs(a - np.sqrt(1 + 4 * traj.times / 3)))

    assert err(0.2) / err(0.1) >= 8


def test_partial_last_step_lands_on_end():
    traj = integrate(FlowState("S2xS2", (1, 1.5)), 0.25, 0.1)
    np.testing.assert_allclose(traj.times, [0, 0.1, 0.2, 0.25])


def test_backward_integration_and_reversibility():
    s0 = FlowState("S2xS2", (1.0, 1.4))
    fwd = integrate(s0, 0.5, 0.01)
    back = integrate(fwd.final(), 0.0, -0.01)
    np.testing.assert_allclose(back.scales[-1], s0.scales, atol=1e-9)
    assert back.times[-1] == 0.0


def test_positivity_violation_keeps_last_state():
    # backwards, a^2 = a0^2 + 4t/3 reaches zero at t = -3/4
    with pytest.raises(FlowError) as ei:
        integrate(FlowState("R2xS2", (1, 1)), -2, -0.1)
    last = ei.value.last
    assert last is not None and all(s > 0 for s in last.scales) and -0.8 < last.t <= -0.6


def test_csv_and_dict():
    traj = integrate(FlowState("R2xS2", (1, 1)), 0.2, 0.1)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,c,a" and len(lines) == 4
    assert lines[1] == "0,1,1"
    d = traj.to_dict()
    assert d["names"] == ["c", "a"] and len(d["t"]) == 3 and d["family"] == "R2xS2"
