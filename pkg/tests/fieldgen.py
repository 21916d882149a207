"""Random smooth divergence-free test fields with walls at r = eta and r = 1."""
import numpy as np

from taylor_transit import axifield as af


def random_field(rng, a, grid, ops, K=2, deg=4):
    r = grid.nodes
    lo, hi = r[0], r[-1]
    x = (r - lo) / (hi - lo)
    psi = np.zeros((2 * K + 1, grid.size), dtype=complex)
    swirl = np.zeros_like(psi)
    for k in range(0, K + 1):
        cp = rng.normal(size=deg) + 1j * rng.normal(size=deg)
        cs = rng.normal(size=deg) + 1j * rng.normal(size=deg)
        if k == 0:
            cp, cs = cp.real, cs.real
        poly_p = np.polynomial.polynomial.polyval(x, cp)
        poly_s = np.polynomial.polynomial.polyval(x, cs)
        # stream function vanishes with its slope on both walls: u_r = 0 there
        prof = x**2 * (1 - x) ** 2 * poly_p * (0.0 if k == 0 else 1.0)
        sw = x * (1 - x) * poly_s
        psi[K + k] += prof
        swirl[K + k] += sw
        if k:
            psi[K - k] += np.conj(prof)
            swirl[K - k] += np.conj(sw)
    return af.stream_field(a, grid, ops, psi, swirl)
