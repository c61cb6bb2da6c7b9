"""Pure numpy tape kernel: loops over instructions, vectorised over points."""
import numpy as np

OP_SET, OP_LOAD, OP_AXPY, OP_POWMUL, OP_FN = range(5)


def run(op, dst, arg, iarg, val, outputs, X, out, nregs):
    """Execute the tape for every row of ``X``; fills ``out``.

    Returns ``(point, instruction)`` of the first domain violation found, or
    ``(-1, -1)`` on success.
    """
    m = X.shape[0]
    R = np.empty((nregs, m), dtype=np.float64)
    XT = X.T
    ops = op.tolist()
    dsts = dst.tolist()
    args = arg.tolist()
    iargs = iarg.tolist()
    vals = val.tolist()
    with np.errstate(all="ignore"):
        for i in range(len(ops)):
            o = ops[i]
            d = dsts[i]
            if o == OP_SET:
                R[d].fill(vals[i])
            elif o == OP_LOAD:
                R[d] = XT[args[i]]
            elif o == OP_AXPY:
                R[d] += vals[i] * R[args[i]]
            elif o == OP_POWMUL:
                x = R[args[i]]
                p = iargs[i]
                if p < 0:
                    bad = np.flatnonzero(x == 0.0)
                    if bad.size:
                        return int(bad[0]), i
                    R[d] /= x if p == -1 else x ** (-p)
                else:
                    R[d] *= x if p == 1 else x**p
            else:
                x = R[args[i]]
                c = iargs[i]
                if c == 0:
                    bad = np.flatnonzero(~(x > 0.0))
                    if bad.size:
                        return int(bad[0]), i
                    R[d] = np.log(x)
                elif c == 1:
                    R[d] = np.exp(x)
                elif c == 2:
                    R[d] = np.sin(x)
                elif c == 3:
                    R[d] = np.cos(x)
                else:
                    bad = np.flatnonzero(x < 0.0)
                    if bad.size:
                        return int(bad[0]), i
                    R[d] = np.sqrt(x)
    out[:, :] = R[outputs].T
    return -1, -1
