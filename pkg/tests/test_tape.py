import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bachlab import tape
from bachlab.expr import DomainError, evaluate
from bachlab.parse import parse
from bachlab.tape import Tape, evaluate_exprs

from test_expr import ENV, exprs

HAS_C = True
try:
    tape.kernel("cython")
except ImportError:
    HAS_C = False


def _backends():
    return ["python"] + (["cython"] if HAS_C else [])


@pytest.mark.parametrize("backend", _backends())
@given(e=exprs, pts=st.lists(st.tuples(st.floats(-1.2, 1.2), st.floats(-1.2, 1.2)),
                            min_size=1, max_size=6))
def test_tape_matches_tree_evaluation(backend, e, pts):
    got = Tape([e], ENV)(np.array(pts), backend=backend)[:, 0]
    ref = [evaluate(e, dict(zip(ENV, p))) for p in pts]
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)


@pytest.mark.skipif(not HAS_C, reason="compiled kernel not built")
def test_backends_agree_on_many_outputs():
    rng = np.random.default_rng(0)
    es = [parse(t, ENV) for t in ("x^2*y - 3", "sin(x)*exp(y)", "1/(1+x^2)^3", "ln(2+y)*sqrt(1+x^2)")]
    X = rng.uniform(-1, 1, (500, 2))
    t = Tape(es, ENV)
    np.testing.assert_allclose(t(X, "cython"), t(X, "python"), rtol=1e-14, atol=1e-14)


@pytest.mark.parametrize("backend", _backends())
def test_domain_error_carries_point(backend):
    t = Tape([parse("ln(y)", ENV)], ENV)
    with pytest.raises(DomainError) as ei:
        t(np.array([[0.0, 1.0], [0.5, -2.0]]), backend=backend)
    assert ei.value.point == {"x": 0.5, "y": -2.0}


@pytest.mark.parametrize("backend", _backends())
def test_division_by_zero_is_reported(backend):
    t = Tape([parse("1/(x-1)", ENV)], ENV)
    with pytest.raises(DomainError, match="division by zero"):
        t(np.array([[1.0, 0.0]]), backend=backend)


def test_wrong_column_count():
    with pytest.raises(ValueError):
        Tape([parse("x", ENV)], ENV)(np.zeros((3, 3)))


def test_evaluate_exprs_shape():
    out = evaluate_exprs([parse("x", ENV), parse("y", ENV), parse("2", ENV)], ENV, [[1, 2], [3, 4]])
    assert out.tolist() == [[1, 2, 2], [3, 4, 2]]


def test_pure_environment_forces_fallback():
    code = "import bachlab.tape as t; print(t.BACKEND)"
    env = dict(os.environ, BACHLAB_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        tape.kernel("fortran")


def test_benchmark_script_runs(capsys):
    import runpy
    from pathlib import Path

    bench = runpy.run_path(str(Path(__file__).parents[1] / "benchmarks" / "bench_tape.py"))
    bench["main"](["--repeat", "1", "--points", "4"])
    out = capsys.readouterr().out
    assert "riemann S2H2" in out and "bach R2S2" in out
