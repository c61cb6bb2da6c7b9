"""Bach flow dg/dt = -2B on scaled products of constant-curvature surfaces.

A product metric ``a·g₁ + b·g₂`` of unit-curvature factors stays in the family
under the flow, which reduces to an ODE for the scale factors.  The reduced
right-hand side is checked against the full Bach tensor of the scaled product
chart before any integration is done.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bach import bach_tensor
from .chart import Chart, builtin, product, scaled
from .expr import sym

__all__ = [
    "FAMILIES",
    "FlowError",
    "OracleMismatch",
    "FlowState",
    "Trajectory",
    "flow_rhs",
    "check_rhs",
    "integrate",
    "family_chart",
    "ORACLE_TOL",
]

ORACLE_TOL = 1e-7

#: family -> (factor charts, scale names, curvature signs of the factors)
FAMILIES = {
    "S2xS2": (("S2_round", "S2_round"), ("a", "b")),
    "S2xH2": (("S2_round", "H2"), ("a", "b")),
    "R2xS2": (("R2", "S2_round"), ("c", "a")),
    "R2xH2": (("R2", "H2"), ("c", "a")),
}


class FlowError(RuntimeError):
    """Integration stopped; ``last`` holds the last valid state."""

    def __init__(self, message: str, last: "FlowState | None" = None):
        self.last = last
        super().__init__(message)


class OracleMismatch(FlowError):
    pass


@dataclass(frozen=True)
class FlowState:
    """Scale factors of a family at time ``t``; order follows ``FAMILIES``."""

    family: str
    scales: tuple
    t: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise FlowError(f"unknown flow family {self.family!r}; choose from {', '.join(FAMILIES)}")
        sc = tuple(float(s) for s in self.scales)
        if len(sc) != 2:
            raise FlowError("a flow state has exactly two scale factors")
        if not all(s > 0 and math.isfinite(s) for s in sc):
            raise FlowError(f"scale factors must be positive, got {sc}")
        object.__setattr__(self, "scales", sc)
        object.__setattr__(self, "t", float(self.t))

    @property
    def names(self) -> tuple:
        return FAMILIES[self.family][1]

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.scales))


def _rhs(family: str, p: float, q: float) -> tuple:
    if family in ("S2xS2", "S2xH2"):
        a, b = p, q
        return (2.0 / 3.0) * (1.0 / a - a / b ** 2), (2.0 / 3.0) * (1.0 / b - b / a ** 2)
    c, a = p, q
    return -2.0 * c / (3.0 * a ** 2), 2.0 / (3.0 * a)


def flow_rhs(state: FlowState) -> tuple:
    """d(scales)/dt for the reduced Bach flow."""
    return _rhs(state.family, *state.scales)


_CHARTS: dict = {}


def family_chart(family: str) -> Chart:
    """Product chart with symbolic scale parameters multiplying each factor."""
    if family not in _CHARTS:
        (f1, f2), (n1, n2) = FAMILIES[family]
        a = scaled(builtin(f1), sym(n1), name=f1)
        b = scaled(builtin(f2), sym(n2), name=f2)
        _CHARTS[family] = product(a, b, name=family + "_scaled")
    return _CHARTS[family]


def check_rhs(state: FlowState, tol: float = ORACLE_TOL) -> float:
    """Compare the reduced RHS with -2 B_ii / g_ii of the full Bach tensor at
    one interior point; raise :class:`OracleMismatch` beyond ``tol``."""
    chart = family_chart(state.family)
    B = bach_tensor(chart)
    params = state.as_dict()
    pt = chart.grid(1, params)
    X = chart.inputs(pt, params)
    Bv = B.evaluate(chart.names(), X).values[0]
    g = chart.metric_field().evaluate(chart.names(), X).values[0]
    na = chart.factors[0].dim
    oracle = (-2 * Bv[0, 0] / g[0, 0] * state.scales[0], -2 * Bv[na, na] / g[na, na] * state.scales[1])
    derived = flow_rhs(state)
    err = max(abs(o - d) for o, d in zip(oracle, derived))
    if not err < tol:
        raise OracleMismatch(
            f"{state.family}: reduced RHS {derived} disagrees with Bach tensor {oracle} (error {err:.3g})",
            state)
    return err


@dataclass
class Trajectory:
    family: str
    times: np.ndarray
    scales: np.ndarray
    oracle_error: float = 0.0
    names: tuple = field(default=())

    def final(self) -> FlowState:
        return FlowState(self.family, tuple(self.scales[-1]), float(self.times[-1]))

    def to_csv(self) -> str:
        lines = ["t," + ",".join(self.names)]
        for t, (p, q) in zip(self.times, self.scales):
            lines.append(f"{t:.10g},{p:.17g},{q:.17g}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"family": self.family, "names": list(self.names),
                "oracle_error": self.oracle_error,
                "t": [float(t) for t in self.times],
                "scales": [[float(p), float(q)] for p, q in self.scales]}


def _stage(family: str, y: np.ndarray) -> np.ndarray:
    # a stage outside the positive range means the step jumped a singularity
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise _LeftDomain
    return np.array(_rhs(family, *y))


class _LeftDomain(Exception):
    pass


def _rk4_step(family: str, y: np.ndarray, h: float) -> np.ndarray:
    k1 = _stage(family, y)
    k2 = _stage(family, y + 0.5 * h * k1)
    k3 = _stage(family, y + 0.5 * h * k2)
    k4 = _stage(family, y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(state: FlowState, t_end: float, dt: float, check: bool = True) -> Trajectory:
    """Fixed-step classical RK4 from ``state`` to ``t_end``.

    A final shorter step lands exactly on ``t_end``.  Negative ``dt``
    integrates backwards (``t_end`` must then not exceed ``state.t``).
    """
    if dt == 0 or not math.isfinite(dt):
        raise FlowError("dt must be a nonzero finite number", state)
    span = t_end - state.t
    if span * dt < 0:
        raise FlowError("t_end lies on the wrong side of the start time for this dt", state)
    err = check_rhs(state) if check else 0.0
    nfull = int(math.floor(abs(span) / abs(dt) + 1e-9))
    steps = [dt] * nfull
    rest = span - nfull * dt
    if abs(rest) > 1e-12 * max(1.0, abs(span)):
        steps.append(rest)
    times = [state.t]
    ys = [np.array(state.scales)]
    y, t = ys[0], state.t
    for h in steps:
        try:
            nxt = _rk4_step(state.family, y, h)
        except _LeftDomain:
            nxt = None
        if nxt is None or not np.all(np.isfinite(nxt)) or np.any(nxt <= 0):
            raise FlowError(f"scale factor left the positive range at t = {t + h:.6g}",
                            FlowState(state.family, tuple(y), t))
        y, t = nxt, t + h
        times.append(t)
        ys.append(y)
    times[-1] = t_end if steps else state.t
    return Trajectory(state.family, np.array(times), np.array(ys), err, state.names)
