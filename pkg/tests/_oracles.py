"""Independent reference computations used by the tests.

Nothing here reuses the package's symbolic differentiation: curvature is
rebuilt from metric values by central finite differences, and symbolic
cross-checks go through sympy.
"""
from __future__ import annotations

import numpy as np

from bachlab.expr import to_text
from bachlab.tape import Tape


def metric_function(chart, params=None):
    """x -> g(x) as a dense (n, n) array, using only metric values."""
    tape = Tape([e for row in chart.metric for e in row], chart.names())
    n = chart.dim
    extra = [float((params or {})[p]) for p in chart.params]

    def g(x):
        row = np.concatenate([np.asarray(x, float), extra])[None, :]
        return tape(row)[0].reshape(n, n)

    return g


def central(f, x, i, h):
    e = np.zeros_like(x, dtype=float)
    e[i] = h
    return (f(x + e) - f(x - e)) / (2 * h)


def richardson(f, x, i, h):
    """Central difference with one Richardson step (error O(h^4))."""
    return (4 * central(f, x, i, h / 2) - central(f, x, i, h)) / 3


def fd_christoffel(g, x, h=1e-5):
    x = np.asarray(x, float)
    n = len(x)
    G = g(x)
    Ginv = np.linalg.inv(G)
    dg = np.array([central(g, x, k, h) for k in range(n)])  # dg[k, i, j] = ∂_k g_ij
    first = np.empty((n, n, n))
    for l in range(n):
        for i in range(n):
            for j in range(n):
                first[l, i, j] = 0.5 * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j])
    return np.einsum("kl,lij->kij", Ginv, first)


def fd_riemann(g, x, h=1e-3, h_inner=1e-5):
    """R[a, b, c, d] = g_am (∂_c Γ^m_db - ∂_d Γ^m_cb + Γ^m_ce Γ^e_db - Γ^m_de Γ^e_cb)."""
    x = np.asarray(x, float)
    n = len(x)
    gam = fd_christoffel(g, x, h_inner)
    dgam = np.array([richardson(lambda y: fd_christoffel(g, y, h_inner), x, c, h) for c in range(n)])
    up = (np.einsum("cadb->abcd", dgam) - np.einsum("dacb->abcd", dgam)
          + np.einsum("ace,edb->abcd", gam, gam) - np.einsum("ade,ecb->abcd", gam, gam))
    return np.einsum("am,mbcd->abcd", g(x), up)


def fd_scalar(g, x, h=1e-3):
    R = fd_riemann(g, x, h)
    Ginv = np.linalg.inv(g(np.asarray(x, float)))
    ric = np.einsum("ac,cbad->bd", Ginv, R)
    return float(np.einsum("bd,bd->", Ginv, ric))


def to_sympy(e, symbols=None):
    import sympy

    text = to_text(e).replace("^", "**")
    ns = {"ln": sympy.log, "exp": sympy.exp, "sin": sympy.sin, "cos": sympy.cos,
          "sqrt": sympy.sqrt}
    for name in e.free:
        ns[name] = sympy.Symbol(name) if symbols is None else symbols[name]
    return sympy.sympify(text, locals=ns)


def sympy_bach(metric, coords):
    """Textbook Bach tensor ∇^c∇^d W_acbd + ½ R^cd W_acbd for a diagonal
    metric, computed with sympy from scratch. Returns a function of a point
    giving the 4x4 numeric matrix (exact substitution; lambdify loses all
    precision on these expressions)."""
    import itertools

    import sympy as sp

    x = sp.symbols(coords)
    n = len(x)
    g = sp.Matrix(n, n, lambda i, j: metric[i] if i == j else 0)
    gi = sp.Matrix(n, n, lambda i, j: 1 / metric[i] if i == j else 0)
    R4 = range(n)
    gam = [[[sp.simplify(sum(gi[k, l] * (sp.diff(g[l, i], x[j]) + sp.diff(g[l, j], x[i])
                                          - sp.diff(g[i, j], x[l])) for l in R4) / 2)
             for j in R4] for i in R4] for k in R4]

    def up(a, b, c, d):  # R^a_bcd
        e = sp.diff(gam[a][d][b], x[c]) - sp.diff(gam[a][c][b], x[d])
        e += sum(gam[a][c][m] * gam[m][d][b] - gam[a][d][m] * gam[m][c][b] for m in R4)
        return e

    R = {}
    for a, b, c, d in itertools.product(R4, repeat=4):
        R[a, b, c, d] = sp.simplify(g[a, a] * up(a, b, c, d))
    ric = {(b, d): sp.simplify(sum(gi[a, a] * R[a, b, a, d] for a in R4)) for b in R4 for d in R4}
    r = sp.simplify(sum(gi[b, b] * ric[b, b] for b in R4))

    def kn(h, k, i, j, a, b):
        return h(i, a) * k(j, b) + h(j, b) * k(i, a) - h(i, b) * k(j, a) - h(j, a) * k(i, b)

    G = lambda i, j: g[i, j]  # noqa: E731
    S = lambda i, j: ric[i, j]  # noqa: E731
    W = {idx: sp.simplify(R[idx] - kn(S, G, *idx) / (n - 2) + r * kn(G, G, *idx) / (2 * (n - 1) * (n - 2)))
         for idx in itertools.product(R4, repeat=4)}

    memo1 = {}

    def dW(e, idx):  # ∇_e W_idx
        key = (e,) + idx
        if key not in memo1:
            t = sp.diff(W[idx], x[e])
            for s in range(4):
                for p in R4:
                    if gam[p][e][idx[s]] != 0:
                        j = idx[:s] + (p,) + idx[s + 1:]
                        t -= gam[p][e][idx[s]] * W[j]
            memo1[key] = t
        return memo1[key]

    def ddW(f, e, idx):  # ∇_f ∇_e W_idx
        t = sp.diff(dW(e, idx), x[f])
        for p in R4:
            if gam[p][f][e] != 0:
                t -= gam[p][f][e] * dW(p, idx)
        for s in range(4):
            for p in R4:
                if gam[p][f][idx[s]] != 0:
                    j = idx[:s] + (p,) + idx[s + 1:]
                    t -= gam[p][f][idx[s]] * dW(e, j)
        return t

    B = sp.zeros(n, n)
    for a, b in itertools.product(R4, repeat=2):
        t = 0
        for c, d in itertools.product(R4, repeat=2):
            t += gi[c, c] * gi[d, d] * (ddW(c, d, (a, c, b, d)) + ric[c, d] * W[a, c, b, d] / 2)
        B[a, b] = t
    def at(point):
        sub = {xi: sp.Rational(repr(float(v))) for xi, v in zip(x, point)}
        return np.array(B.subs(sub).evalf(20).tolist(), dtype=float)

    return at


def sympy_lie_connection(metric, coords, V):
    """(𝔏_V∇)^k_ij from the coordinate formula
    ∂_i∂_j V^k + V^l ∂_l Γ^k_ij − Γ^l_ij ∂_l V^k + Γ^k_lj ∂_i V^l + Γ^k_il ∂_j V^l,
    with metric, V given as sympy-parsable strings. Returns point -> array[k, i, j]."""
    import sympy as sp

    x = sp.symbols(coords)
    ns = dict(zip(coords, x))
    n = len(x)
    g = sp.Matrix(n, n, lambda i, j: sp.sympify(metric[i][j].replace("^", "**"), locals=ns))
    gi = g.inv()
    V = [sp.sympify(v.replace("^", "**"), locals=ns) for v in V]
    R = range(n)
    gam = [[[sum(gi[k, l] * (sp.diff(g[l, i], x[j]) + sp.diff(g[l, j], x[i]) - sp.diff(g[i, j], x[l]))
                 for l in R) / 2 for j in R] for i in R] for k in R]
    L = [[[sp.diff(V[k], x[i], x[j])
           + sum(V[l] * sp.diff(gam[k][i][j], x[l]) - gam[l][i][j] * sp.diff(V[k], x[l])
                 + gam[k][l][j] * sp.diff(V[l], x[i]) + gam[k][i][l] * sp.diff(V[l], x[j]) for l in R)
           for j in R] for i in R] for k in R]
    f = sp.lambdify(x, L, "numpy")
    return lambda p: np.array(f(*p), dtype=float)
