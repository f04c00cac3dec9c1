"""Independent Riemannian oracle: Christoffel symbols and curvature via sympy.

Used only by the tests.  For a Riemannian metric ``g(x)`` the geodesic spray has
``G^i = 1/2 Gamma^i_jk y^j y^k`` and the Jacobi endomorphism is
``Phi^i_j = R^i_{l j k} y^k y^l`` with ``R(d_j, d_k) d_l = R^i_{l j k} d_i``.
"""
from functools import lru_cache

import numpy as np
import sympy as sp


def _metrics(x):
    r2 = sum(xi**2 for xi in x)
    n = len(x)
    sphere = sp.Matrix(n, n, lambda i, j: (4 / (1 + r2) ** 2) * (1 if i == j else 0))
    klein = sp.Matrix(n, n, lambda i, j: (1 if i == j else 0) / (1 - r2) + x[i] * x[j] / (1 - r2) ** 2)
    return {"sphere": sphere, "klein": klein}


@lru_cache(maxsize=None)
def oracle(name: str, n: int = 2):
    x = sp.symbols(f"x1:{n + 1}")
    y = sp.symbols(f"y1:{n + 1}")
    g = _metrics(x)[name]
    ginv = sp.simplify(g.inv())
    Gamma = [[[sp.simplify(sum(ginv[i, m] * (sp.diff(g[m, j], x[k]) + sp.diff(g[m, k], x[j]) - sp.diff(g[j, k], x[m]))
                                    for m in range(n)) / 2)
               for k in range(n)] for j in range(n)] for i in range(n)]

    def riem(i, l, j, k):
        expr = sp.diff(Gamma[i][k][l], x[j]) - sp.diff(Gamma[i][j][l], x[k])
        expr += sum(Gamma[i][j][m] * Gamma[m][k][l] - Gamma[i][k][m] * Gamma[m][j][l] for m in range(n))
        return expr

    G = [sum(Gamma[i][j][k] * y[j] * y[k] for j in range(n) for k in range(n)) / 2 for i in range(n)]
    Phi = sp.Matrix(n, n, lambda i, j: sum(riem(i, l, j, k) * y[k] * y[l] for k in range(n) for l in range(n)))
    # sectional curvature of the (e1, e2) plane
    R1212 = sum(g[0, i] * riem(i, 1, 0, 1) for i in range(n))
    K = R1212 / (g[0, 0] * g[1, 1] - g[0, 1] ** 2)
    args = (*x, *y)
    return {
        "G": sp.lambdify(args, G, "numpy"),
        "Phi": sp.lambdify(args, Phi, "numpy"),
        "K": sp.lambdify(args, K, "numpy"),
    }


def evaluate(name: str, key: str, xv, yv) -> np.ndarray:
    f = oracle(name, len(xv))[key]
    return np.asarray(f(*xv, *yv), dtype=float)
