# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tape kernel: one scalar pass over the tape per point."""
from libc.math cimport log, exp, sin, cos, sqrt, pow
from libc.stdlib cimport malloc, free

DEF OP_SET = 0
DEF OP_LOAD = 1
DEF OP_AXPY = 2
DEF OP_POWMUL = 3
DEF OP_FN = 4


cdef inline double ipow(double x, int p) nogil:
    cdef double r = 1.0
    cdef int k
    if p < 0:
        p = -p
    if p <= 8:
        for k in range(p):
            r *= x
        return r
    return pow(x, <double>p)


def run(const int[::1] op, const int[::1] dst, const int[::1] arg,
        const int[::1] iarg, const double[::1] val, const int[::1] outputs,
        const double[:, ::1] X, double[:, ::1] out, int nregs):
    """Execute the tape for every row of ``X``; fills ``out``.

    Returns ``(point, instruction)`` of the first domain violation, or
    ``(-1, -1)`` on success.
    """
    cdef Py_ssize_t m = X.shape[0]
    cdef Py_ssize_t n = op.shape[0]
    cdef Py_ssize_t nout = outputs.shape[0]
    cdef Py_ssize_t p, i, k
    cdef int o, c, e
    cdef double x
    cdef int bad_p = -1
    cdef int bad_i = -1
    cdef double* R = <double*> malloc(max(nregs, 1) * sizeof(double))
    if R == NULL:
        raise MemoryError()
    try:
        with nogil:
            for p in range(m):
                for i in range(n):
                    o = op[i]
                    if o == OP_SET:
                        R[dst[i]] = val[i]
                    elif o == OP_LOAD:
                        R[dst[i]] = X[p, arg[i]]
                    elif o == OP_AXPY:
                        R[dst[i]] += val[i] * R[arg[i]]
                    elif o == OP_POWMUL:
                        x = R[arg[i]]
                        e = iarg[i]
                        if e == 1:
                            R[dst[i]] *= x
                        elif e > 0:
                            R[dst[i]] *= ipow(x, e)
                        else:
                            if x == 0.0:
                                bad_p = p
                                bad_i = i
                                break
                            R[dst[i]] /= ipow(x, e)
                    else:
                        x = R[arg[i]]
                        c = iarg[i]
                        if c == 0:
                            if not (x > 0.0):
                                bad_p = p
                                bad_i = i
                                break
                            R[dst[i]] = log(x)
                        elif c == 1:
                            R[dst[i]] = exp(x)
                        elif c == 2:
                            R[dst[i]] = sin(x)
                        elif c == 3:
                            R[dst[i]] = cos(x)
                        else:
                            if x < 0.0:
                                bad_p = p
                                bad_i = i
                                break
                            R[dst[i]] = sqrt(x)
                if bad_p >= 0:
                    break
                for k in range(nout):
                    out[p, k] = R[outputs[k]]
    finally:
        free(R)
    return bad_p, bad_i
