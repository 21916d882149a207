"""Radial discretisation on [eta, 1] (or a planar gap [0, 1]).

Grid functions are plain 1-D arrays sampled at ``grid.nodes`` (increasing).
Quadrature weights already carry the ``r`` factor of the cylindrical inner
product; the planar gap grid uses unit weight.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft
from numpy.polynomial import chebyshev as npcheb

MIN_RESOLUTION = 16

# condition estimate (after row equilibration) above which a BVP is refused
SINGULAR_COND = 1e13


class ResolutionError(ValueError):
    pass


class SingularOperatorError(RuntimeError):
    pass


def cheb_matrix(n: int):
    """Chebyshev-Gauss-Lobatto points on [-1, 1] (descending) and D."""
    j = np.arange(n + 1)
    x = np.cos(np.pi * j / n)
    c = np.hstack([2.0, np.ones(n - 1), 2.0]) * (-1.0) ** j
    dx = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def clenshaw_curtis(n: int) -> np.ndarray:
    """Clenshaw-Curtis weights on [-1, 1] for the points ``cos(pi j/n)``."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
        v -= np.cos(n * theta[1:-1]) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / n
    return w


def fd_first_derivative(x: np.ndarray) -> np.ndarray:
    """Second-order finite-difference first derivative on a uniform grid."""
    m = len(x)
    dx = x[1] - x[0]
    D = np.zeros((m, m))
    i = np.arange(1, m - 1)
    D[i, i - 1] = -0.5 / dx
    D[i, i + 1] = 0.5 / dx
    D[0, :3] = np.array([-1.5, 2.0, -0.5]) / dx
    D[-1, -3:] = np.array([0.5, -2.0, 1.5]) / dx
    return D


@dataclass(frozen=True, eq=False)
class RadialGrid:
    eta: float
    n: int
    nodes: np.ndarray
    quad_weights: np.ndarray
    scheme: str = "collocation"
    planar: bool = False
    D_matrix: np.ndarray = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def r(self) -> np.ndarray:
        return self.nodes

    @property
    def plain_weights(self) -> np.ndarray:
        """Weights for a plain ``int f dr``."""
        return self.quad_weights if self.planar else self.quad_weights / self.nodes

    def metadata(self) -> dict:
        return {
            "scheme": self.scheme,
            "n": self.n,
            "left": float(self.nodes[0]),
            "right": float(self.nodes[-1]),
            "geometry": "planar-gap" if self.planar else "cylindrical",
        }


def build_grid(eta: float, n: int, scheme: str = "collocation") -> RadialGrid:
    """Grid on [eta, 1] with r-weighted quadrature.

    ``collocation`` uses Chebyshev points (wall clustered, Clenshaw-Curtis
    weights); ``finite_difference`` a uniform grid with Simpson weights and a
    second-order first-derivative matrix.
    """
    if not (0.0 < eta < 1.0):
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    return _build(eta, 1.0, n, scheme, planar=False)


def build_gap_grid(n: int, scheme: str = "collocation") -> RadialGrid:
    """Planar grid on the gap coordinate [0, 1] for the narrow-gap systems."""
    return _build(0.0, 1.0, n, scheme, planar=True)


def _build(left: float, right: float, n: int, scheme: str, planar: bool) -> RadialGrid:
    if n < MIN_RESOLUTION:
        raise ResolutionError(f"resolution below minimum: n={n} < {MIN_RESOLUTION}")
    span = right - left
    if scheme == "collocation":
        x, Dx = cheb_matrix(n)
        r = left + span * (1.0 - x) / 2.0
        D = Dx * (-2.0 / span)
        w = clenshaw_curtis(n) * span / 2.0
    elif scheme == "finite_difference":
        if n % 2:
            n += 1  # Simpson needs an even number of intervals
        r = np.linspace(left, right, n + 1)
        D = fd_first_derivative(r)
        dx = span / n
        w = np.full(n + 1, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= dx / 3.0
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not planar:
        w = w * r
    return RadialGrid(left, n, r, w, scheme, planar, D)


class DiffOperators:
    """Discrete D, D_* = D + 1/r and DD_* on a grid.

    On a planar gap grid D_* reduces to D. Fourth-order operators are built by
    composing ``DD_* - a^2`` with itself; boundary rows are added by the
    caller through :class:`BoundaryConditionSet`.
    """

    def __init__(self, grid: RadialGrid):
        self.grid = grid
        self.D = grid.D_matrix
        n = grid.size
        self.I = np.eye(n)
        if grid.planar:
            self.inv_r = np.zeros(n)
            self.Dstar = self.D.copy()
        else:
            self.inv_r = 1.0 / grid.nodes
            self.Dstar = self.D + np.diag(self.inv_r)

    @cached_property
    def DDstar(self) -> np.ndarray:
        return self.D @ self.Dstar

    @cached_property
    def DstarD(self) -> np.ndarray:
        return self.Dstar @ self.D

    def L(self, a: float) -> np.ndarray:
        return self.DDstar - a * a * self.I

    def L2(self, a: float) -> np.ndarray:
        La = self.L(a)
        return La @ La

    def apply(self, op: str, f: np.ndarray, a: float = 0.0) -> np.ndarray:
        """Apply an operator to a grid function.

        On collocation grids derivatives are taken in Chebyshev coefficient
        space after chopping the round-off tail, so exact identities (e.g.
        ``DD_* r = 0``) are reproduced to machine precision instead of being
        swamped by amplified sampling noise.
        """
        if self.grid.scheme == "collocation":
            return self._apply_spectral(op, np.asarray(f, dtype=float), a)
        mats = {
            "D": lambda: self.D,
            "Dstar": lambda: self.Dstar,
            "DDstar": lambda: self.DDstar,
            "DstarD": lambda: self.DstarD,
            "L": lambda: self.L(a),
            "L2": lambda: self.L2(a),
        }
        if op not in mats:
            raise KeyError(f"unknown operator {op!r}")
        return mats[op]() @ f

    def _apply_spectral(self, op: str, f: np.ndarray, a: float) -> np.ndarray:
        d = lambda g: self.derivative(g)
        ds = lambda g: d(g) + self.inv_r * g
        if op == "D":
            return d(f)
        if op == "Dstar":
            return ds(f)
        if op == "DDstar":
            return d(ds(f))
        if op == "DstarD":
            return ds(d(f))
        if op == "L":
            return d(ds(f)) - a * a * f
        if op == "L2":
            g = d(ds(f)) - a * a * f
            return d(ds(g)) - a * a * g
        raise KeyError(f"unknown operator {op!r}")

    def derivative(self, f: np.ndarray) -> np.ndarray:
        """d/dr of a grid function via chopped Chebyshev coefficients."""
        g = self.grid
        c = values_to_cheb(f)
        c = chop(c)
        dc = npcheb.chebder(c) * (-2.0 / (g.nodes[-1] - g.nodes[0]))
        if len(dc) == 0:
            return np.zeros_like(f)
        return cheb_to_values(dc, g.n)


def values_to_cheb(f: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients of samples at ``cos(pi j/n)``, j = 0..n."""
    n = len(f) - 1
    c = scipy.fft.dct(f, type=1) / n
    c[0] /= 2.0
    c[-1] /= 2.0
    return c


def cheb_to_values(c: np.ndarray, n: int) -> np.ndarray:
    x = np.cos(np.pi * np.arange(n + 1) / n)
    return npcheb.chebval(x, c)


def chop(c: np.ndarray, tol: float = 64 * np.finfo(float).eps) -> np.ndarray:
    """Drop the trailing coefficients that sit below ``tol`` relative to the largest."""
    scale = np.max(np.abs(c))
    if scale == 0:
        return c[:1] * 0
    keep = np.nonzero(np.abs(c) > tol * scale)[0]
    return c[: keep[-1] + 1]


def weighted_inner(f: np.ndarray, g: np.ndarray, grid: RadialGrid) -> float:
    """Approximate ``int_eta^1 f g r dr``."""
    if len(f) != grid.size or len(g) != grid.size:
        raise ValueError("grid functions do not match the grid")
    return float(np.sum(grid.quad_weights * f * g))


@dataclass(frozen=True)
class BoundaryConditionSet:
    """Per-unknown constraints as ``(kind, wall)`` pairs.

    ``kind`` is ``"value"`` or ``"derivative"``; ``wall`` is ``"left"`` or
    ``"right"``. Values are imposed on the first/last row of the unknown's
    block, derivatives on the second/second-to-last row.
    """

    constraints: tuple[tuple[tuple[str, str], ...], ...]

    @classmethod
    def dirichlet(cls, n_unknowns: int = 1) -> "BoundaryConditionSet":
        c = (("value", "left"), ("value", "right"))
        return cls(tuple(c for _ in range(n_unknowns)))

    @classmethod
    def clamped(cls) -> tuple:
        return (("value", "left"), ("value", "right"), ("derivative", "left"), ("derivative", "right"))

    @classmethod
    def of(cls, *per_unknown) -> "BoundaryConditionSet":
        return cls(tuple(tuple(c) for c in per_unknown))

    @property
    def n_unknowns(self) -> int:
        return len(self.constraints)


def boundary_rows(bcs: BoundaryConditionSet, ops: DiffOperators):
    """Yield ``(row_index, row_vector)`` for every constraint of a block system."""
    n = ops.grid.size
    m = bcs.n_unknowns
    rows = []
    for k, cons in enumerate(bcs.constraints):
        off = k * n
        for kind, wall in cons:
            vec = np.zeros(m * n)
            if kind == "value":
                idx = 0 if wall == "left" else n - 1
                vec[off + idx] = 1.0
            elif kind == "derivative":
                idx = 1 if wall == "left" else n - 2
                vec[off:off + n] = ops.D[0 if wall == "left" else n - 1]
            else:
                raise ValueError(f"unknown constraint kind {kind!r}")
            rows.append((off + idx, vec))
    return rows


def embed_boundary_rows(A: np.ndarray, bcs: BoundaryConditionSet, ops: DiffOperators,
                        *others: np.ndarray):
    """Replace rows of ``A`` with constraint rows; zero the same rows of ``others``.

    Returns the modified copies and the list of replaced row indices.
    """
    A = np.array(A, copy=True)
    others = [np.array(B, copy=True) for B in others]
    replaced = []
    for idx, vec in boundary_rows(bcs, ops):
        A[idx, :] = vec.astype(A.dtype)
        for B in others:
            B[idx, ...] = 0.0
        replaced.append(idx)
    return (A, *others, replaced)


def backward_error(A: np.ndarray, x: np.ndarray, b: np.ndarray, rows=None) -> float:
    """Componentwise backward error ``max |A x - b| / (|A| |x| + |b|)`` over ``rows``.

    The plain ``|A x - b| / |b|`` is dominated by ``eps |A| |x|`` for
    collocation operators of order four and cannot drop below ~1e-9 in double
    precision; the componentwise measure is the meaningful solver contract.
    """
    if rows is not None:
        A, b = A[rows], b[rows]
    res = np.abs(A @ x - b)
    scale = np.abs(A) @ np.abs(x) + np.abs(b)
    if res.ndim > 1:
        res, scale = res.max(axis=-1), scale.max(axis=-1)
    mask = scale > 0
    if not np.any(mask):
        return 0.0
    return float(np.max(res[mask] / scale[mask]))


def _equilibrated_cond(A: np.ndarray) -> float:
    s = np.max(np.abs(A), axis=1)
    s[s == 0] = 1.0
    return float(np.linalg.cond(A / s[:, None]))


def solve_linear_bvp(A: np.ndarray, rhs: np.ndarray, bcs: BoundaryConditionSet,
                     ops: DiffOperators, bc_values=None, check: bool = True) -> np.ndarray:
    """Solve ``A x = rhs`` after embedding boundary rows (homogeneous by default).

    ``A`` is square of size ``m * n`` for ``m`` unknowns. ``rhs`` may be 1-D or
    have trailing columns for several right-hand sides.
    """
    rhs = np.asarray(rhs)
    Ab, b, replaced = embed_boundary_rows(A, bcs, ops, rhs)
    if bc_values is not None:
        for idx, val in zip(replaced, bc_values):
            b[idx, ...] = val
    if check:
        cond = _equilibrated_cond(Ab)
        if not np.isfinite(cond) or cond > SINGULAR_COND:
            raise SingularOperatorError(
                f"BVP operator singular; check lambda not at eigenvalue (cond ~ {cond:.2e})"
            )
    x = np.linalg.solve(Ab, b)
    if check:
        interior = np.setdiff1d(np.arange(Ab.shape[0]), replaced)
        if backward_error(Ab, x, b, interior) > 1e-10:
            raise SingularOperatorError("BVP solve did not reach residual tolerance")
    return x


def bvp_residual(A: np.ndarray, x: np.ndarray, rhs: np.ndarray, bcs: BoundaryConditionSet,
                 ops: DiffOperators) -> float:
    """Interior componentwise backward error of a BVP solution."""
    replaced = [idx for idx, _ in boundary_rows(bcs, ops)]
    interior = np.setdiff1d(np.arange(A.shape[0]), replaced)
    return backward_error(A, x, rhs, interior)


def interpolant(f: np.ndarray, grid: RadialGrid):
    """Callable ``r -> f(r)`` built from grid samples (Chebyshev series or cubic spline)."""
    left, right = grid.nodes[0], grid.nodes[-1]
    if grid.scheme == "collocation":
        c = values_to_cheb(np.asarray(f, dtype=float))
        return lambda r: npcheb.chebval(1.0 - 2.0 * (np.asarray(r) - left) / (right - left), c)
    from scipy.interpolate import CubicSpline
    return CubicSpline(grid.nodes, f)


def locate_max(f: np.ndarray, grid: RadialGrid) -> tuple[float, float]:
    """Position and value of the maximum of the interpolant of ``f``.

    The discrete argmax is refined by a bounded scalar search between its
    neighbours, so the result does not depend on where the nodes happen to sit.
    """
    from scipy.optimize import minimize_scalar

    f = np.asarray(f, dtype=float)
    i = int(np.argmax(f))
    lo = grid.nodes[max(i - 1, 0)]
    hi = grid.nodes[min(i + 1, grid.size - 1)]
    F = interpolant(f, grid)
    res = minimize_scalar(lambda r: -float(F(r)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, abs(hi))})
    r0, val = float(res.x), float(-res.fun)
    if val < f[i]:
        return float(grid.nodes[i]), float(f[i])
    return r0, val
