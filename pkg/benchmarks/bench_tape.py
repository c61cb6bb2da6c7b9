"""Compare the compiled tape kernel with the numpy fallback.

Workloads are real tapes from the pipeline: the Riemann tensor of S2H2 and
the Bach tensor of R2S2, evaluated on growing point sets.

    python3 benchmarks/bench_tape.py [--repeat N] [--points 10,100,1000]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from bachlab.bach import bach_tensor
from bachlab.chart import builtin
from bachlab.curvature import riemann
from bachlab.tape import Tape, kernel


def workloads():
    c = builtin("S2H2")
    yield "riemann S2H2", c, Tape(riemann(c).flat(), c.names())
    c = builtin("R2S2")
    yield "bach R2S2", c, Tape(bach_tensor(c).flat(), c.names())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--points", default="10,100,1000")
    args = ap.parse_args(argv)
    sizes = [int(s) for s in args.points.split(",")]
    try:
        kernel("cython")
        backends = ["cython", "python"]
    except ImportError:
        print("compiled kernel not built; timing the numpy fallback only")
        backends = ["python"]

    print(f"{'workload':<14} {'instr':>6} {'points':>7} " + " ".join(f"{b + ' ms':>11}" for b in backends)
          + ("  speedup" if len(backends) == 2 else ""))
    for label, chart, tape in workloads():
        for m in sizes:
            X = chart.inputs(chart.random_points(m, seed=0))
            ref = tape(X, backend=backends[-1])
            times = []
            for b in backends:
                np.testing.assert_allclose(tape(X, backend=b), ref, rtol=1e-12, atol=1e-12)
                t = min(timeit.repeat(lambda: tape(X, backend=b), number=1, repeat=args.repeat))
                times.append(t * 1e3)
            row = f"{label:<14} {len(tape):>6} {m:>7} " + " ".join(f"{t:>11.3f}" for t in times)
            if len(times) == 2:
                row += f"  {times[1] / times[0]:>6.1f}x"
            print(row)


if __name__ == "__main__":
    main()
