"""Independent reference computations that share no code with the package."""
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq, minimize_scalar
from scipy.special import j0, y0


def fd_benard_lambda2(a: float, m: int) -> float:
    """Smallest lam^2 of (D^2 - a^2)^3 h = -a^2 lam^2 h, clamped h, Dirichlet (D^2-a^2)^2 h.

    Second-order finite differences on m intervals of [0, 1]; the clamped
    condition enters through the ghost value h_{-1} = h_1.
    """
    dx = 1.0 / m
    k = m - 1  # interior unknowns
    e = np.ones(k)
    D2 = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1]) / dx**2
    D4 = sp.diags([e[:-2], -4 * e[:-1], 6 * e, -4 * e[:-1], e[:-2]], [-2, -1, 0, 1, 2]).tolil()
    D4[0, 0] = 7.0
    D4[k - 1, k - 1] = 7.0
    D4 = D4.tocsc() / dx**4
    I = sp.identity(k, format="csc")
    L2h = D4 - 2 * a * a * D2 + a**4 * I
    Lphi = D2 - a * a * I
    # block pencil in (h, phi): L^2 h = a^2 lam phi, L phi = -lam h; forming the
    # sixth-order product instead would cost ~dx^-6 in conditioning
    A = sp.bmat([[L2h, None], [None, Lphi]], format="csc")
    B = sp.bmat([[None, a * a * I], [-I, None]], format="csc")
    sigma = 41.0
    lu = spla.splu((A - sigma * B).tocsc())
    op = spla.LinearOperator(A.shape, matvec=lambda x: lu.solve(B @ x), dtype=float)
    nu = spla.eigs(op, k=1, which="LM", return_eigenvectors=False)
    return float((sigma + 1.0 / nu[0]).real) ** 2


def fd_benard_richardson(a: float, m: int = 1000) -> float:
    coarse = fd_benard_lambda2(a, m // 2)
    fine = fd_benard_lambda2(a, m)
    return (4 * fine - coarse) / 3


def fd_benard_critical(m: int = 1000):
    res = minimize_scalar(lambda a: fd_benard_richardson(a, m), bounds=(3.0, 3.25),
                          method="bounded", options={"xatol": 1e-5})
    return float(res.x), float(res.fun)


def bessel_dirichlet_rates(eta: float, count: int):
    """Decay rates k^2 of (1/r)(r e')' = -k^2 e with e(eta) = e(1) = 0."""
    f = lambda k: j0(k * eta) * y0(k) - j0(k) * y0(k * eta)
    out = []
    step = 0.05 * math.pi / (1 - eta)
    k = 1e-6
    while len(out) < count:
        k2 = k + step
        if f(k) * f(k2) < 0:
            out.append(brentq(f, k, k2, xtol=1e-14) ** 2)
        k = k2
    return np.array(out)


def composite_simpson(f, lo: float, hi: float, m: int = 10000) -> float:
    x = np.linspace(lo, hi, m + 1)
    w = np.full(m + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return float(np.sum(w * f(x)) * (hi - lo) / (3 * m))
