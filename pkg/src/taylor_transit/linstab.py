"""Marginal stability, adjoint modes, critical wavenumber and growth rates.

Eigenfunctions are stored in the scaling of the marginal system

    (DD_* - a^2)^2 h = a^2 lam c_r(r) phi,     (DD_* - a^2) phi = -lam c_t(r) h,

with ``c_r = 1/r^2 - kappa`` and ``c_t = kappa`` for the annulus. In this
scaling the azimuthal velocity amplitude of the mode is ``a * phi`` (see
:attr:`StabilityMode.phi_field`), and for the adjoint it is ``phistar / a``.
The narrow-gap systems use the same form on a planar gap grid with
``c_r = w(x)`` and ``c_t = 1``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .params import NondimParams
from .radial_ops import (
    BoundaryConditionSet,
    DiffOperators,
    RadialGrid,
    backward_error,
    embed_boundary_rows,
    locate_max,
    weighted_inner,
)

log = logging.getLogger(__name__)

MODE_BCS = BoundaryConditionSet.of(
    BoundaryConditionSet.clamped(), (("value", "left"), ("value", "right"))
)


class StabilityError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Coupling:
    """Coefficient profiles of the rotational coupling terms (without lambda)."""

    c_r: np.ndarray
    c_t: np.ndarray
    label: str

    def as_dict(self) -> dict:
        return {"label": self.label}


def cylindrical_coupling(params: NondimParams, grid: RadialGrid) -> Coupling:
    r = grid.nodes
    k = params.kappa
    return Coupling(1.0 / r**2 - k, np.full_like(r, k), f"annulus(eta={params.eta}, mu={params.mu})")


def narrowgap_coupling(mu: float, grid: RadialGrid, variant: str = "symmetric") -> Coupling:
    x = grid.nodes
    if variant == "symmetric":
        w = np.ones_like(x)
    elif variant == "full":
        w = 1.0 - (1.0 - mu) * x
    else:
        raise ValueError(f"unknown narrow-gap variant {variant!r}")
    return Coupling(w, np.ones_like(x), f"narrowgap-{variant}(mu={mu})")


@dataclass(frozen=True, eq=False)
class StabilityMode:
    a: float
    lambda0: float
    h: np.ndarray
    phi: np.ndarray
    grid: RadialGrid
    coupling: Coupling
    normalization: str = "max_h=1"
    residuals: tuple[float, float] = (0.0, 0.0)
    lambda_next: float | None = None
    flags: tuple[str, ...] = ()

    @property
    def phi_field(self) -> np.ndarray:
        """Azimuthal velocity amplitude of the mode."""
        return self.a * self.phi

    @property
    def L(self) -> float:
        return 2.0 * math.pi / self.a

    def scaled(self, c: float) -> "StabilityMode":
        return StabilityMode(self.a, self.lambda0, c * self.h, c * self.phi, self.grid,
                             self.coupling, f"{self.normalization}*{c:g}", self.residuals,
                             self.lambda_next, self.flags)

    def interior_positive(self) -> tuple[bool, bool]:
        s = slice(1, -1)
        return bool(np.all(self.h[s] > 0)), bool(np.all(self.phi[s] > 0))


@dataclass(frozen=True, eq=False)
class AdjointMode:
    a: float
    lambda0: float
    hstar: np.ndarray
    phistar: np.ndarray
    grid: RadialGrid
    coupling: Coupling
    normalization: str = "max_h=1"
    residuals: tuple[float, float] = (0.0, 0.0)

    @property
    def phi_field(self) -> np.ndarray:
        return self.phistar / self.a

    def scaled(self, c: float) -> "AdjointMode":
        return AdjointMode(self.a, self.lambda0, c * self.hstar, c * self.phistar, self.grid,
                           self.coupling, f"{self.normalization}*{c:g}", self.residuals)

    def interior_positive(self) -> tuple[bool, bool]:
        s = slice(1, -1)
        return bool(np.all(self.hstar[s] > 0)), bool(np.all(self.phistar[s] > 0))


@dataclass(frozen=True)
class CriticalPoint:
    a_c: float
    L_c: float
    lambda_c: float
    T_c: float
    flags: tuple[str, ...] = ()
    scan: tuple[tuple[float, float], ...] = ()

    def as_dict(self) -> dict:
        return {
            "a_c": self.a_c,
            "L_c": self.L_c,
            "lambda_c": self.lambda_c,
            "T_c": self.T_c,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class GrowthCurve:
    samples: tuple[tuple[float, float], ...]
    lambda_c: float
    slope: float

    def beta_at(self, lam: float) -> float:
        lams, betas = np.array(self.samples).T
        return float(np.interp(lam, lams, betas))


def _marginal_blocks(a: float, coupling: Coupling, ops: DiffOperators, adjoint: bool):
    n = ops.grid.size
    L = ops.L(a)
    K0 = np.zeros((2 * n, 2 * n))
    K0[:n, :n] = L @ L
    K0[n:, n:] = L
    K1 = np.zeros_like(K0)
    if adjoint:
        K1[:n, n:] = np.diag(coupling.c_t)
        K1[n:, :n] = -a * a * np.diag(coupling.c_r)
    else:
        K1[:n, n:] = a * a * np.diag(coupling.c_r)
        K1[n:, :n] = -np.diag(coupling.c_t)
    return K0, K1


def _positive_marginal_values(a, coupling, ops, adjoint):
    """Eigen-decomposition of K0^{-1} K1; returns sorted real positive lambdas and vectors."""
    K0, K1 = _marginal_blocks(a, coupling, ops, adjoint)
    K0b, K1b, rows = embed_boundary_rows(K0, MODE_BCS, ops, K1)
    M = np.linalg.solve(K0b, K1b)
    nu, vecs = np.linalg.eig(M)
    big = np.abs(nu) > 1e-14 * np.max(np.abs(nu))
    nu, vecs = nu[big], vecs[:, big]
    order = np.argsort(-np.abs(nu))
    nu, vecs = nu[order], vecs[:, order]
    lead = nu[0]
    if abs(lead.imag) > 1e-8 * abs(lead):
        raise StabilityError("complex marginal eigenvalue: PES assumption violated")
    real = np.abs(nu.imag) <= 1e-8 * np.abs(nu)
    pos = real & (nu.real > 0)
    if not np.any(pos):
        raise StabilityError("no marginal value at this wavenumber")
    lam = 1.0 / nu[pos].real
    vec = vecs[:, pos]
    return lam, vec, K0b, K1b, rows


def _fix_gauge(h, phi, grid):
    """Scale so that the continuous maximum of h is +1."""
    idx = int(np.argmax(np.abs(h)))
    if h[idx] < 0:
        h, phi = -h, -phi
    _, hmax = locate_max(h, grid)
    return h / hmax, phi / hmax


def _mode_residuals(K0b, K1b, lam, x, rows, n):
    interior = np.setdiff1d(np.arange(2 * n), rows)
    top = interior[interior < n]
    bot = interior[interior >= n]
    r1 = backward_error(np.hstack([K0b[top], lam * K1b[top]]), np.hstack([x, -x]), np.zeros(len(top)))
    r2 = backward_error(np.hstack([K0b[bot], lam * K1b[bot]]), np.hstack([x, -x]), np.zeros(len(bot)))
    return float(r1), float(r2)


def solve_marginal(params: NondimParams | None, a: float, grid: RadialGrid,
                   ops: DiffOperators | None = None, coupling: Coupling | None = None,
                   gap_margin: float = 1e-3) -> StabilityMode:
    """Smallest positive marginal value and its (h, phi) at wavenumber ``a``."""
    if a <= 0:
        raise ValueError("wavenumber must be positive")
    ops = ops or DiffOperators(grid)
    if coupling is None:
        coupling = cylindrical_coupling(params, grid)
    lam, vec, K0b, K1b, rows = _positive_marginal_values(a, coupling, ops, adjoint=False)
    n = grid.size
    i0 = int(np.argmin(lam))
    x = vec[:, i0].real
    h, phi = _fix_gauge(x[:n], x[n:], grid)
    x = np.concatenate([h, phi])
    res = _mode_residuals(K0b, K1b, lam[i0], x, rows, n)
    others = np.sort(lam[lam > lam[i0] * (1 + 1e-10)])
    nxt = float(others[0]) if len(others) else None
    flags = []
    if params is not None and params.mu < 0:
        flags.append("PES unverified")
    if nxt is not None and nxt / lam[i0] - 1.0 < gap_margin:
        flags.append("near-degenerate marginal value")
    return StabilityMode(a, float(lam[i0]), h, phi, grid, coupling, "max_h=1", res, nxt, tuple(flags))


def solve_adjoint(params: NondimParams | None, a: float, lambda0: float, grid: RadialGrid,
                  ops: DiffOperators | None = None, coupling: Coupling | None = None,
                  rtol: float = 1e-8) -> AdjointMode:
    ops = ops or DiffOperators(grid)
    if coupling is None:
        coupling = cylindrical_coupling(params, grid)
    lam, vec, K0b, K1b, rows = _positive_marginal_values(a, coupling, ops, adjoint=True)
    n = grid.size
    i0 = int(np.argmin(lam))
    if abs(lam[i0] - lambda0) > rtol * abs(lambda0):
        raise StabilityError(
            f"primal/adjoint spectrum inconsistency; raise resolution "
            f"({lam[i0]!r} vs {lambda0!r})"
        )
    x = vec[:, i0].real
    hs, ps = _fix_gauge(x[:n], x[n:], grid)
    x = np.concatenate([hs, ps])
    res = _mode_residuals(K0b, K1b, lam[i0], x, rows, n)
    return AdjointMode(a, float(lam[i0]), hs, ps, grid, coupling, "max_h=1", res)


def solve_marginal_narrowgap(mu: float, a: float, grid: RadialGrid, ops: DiffOperators | None = None,
                             variant: str = "symmetric") -> StabilityMode:
    """Marginal value of the planar narrow-gap system on the gap coordinate [0, 1]."""
    if not grid.planar:
        raise ValueError("narrow-gap systems need a planar gap grid (build_gap_grid)")
    return solve_marginal(None, a, grid, ops, narrowgap_coupling(mu, grid, variant))


def marginal_lambda(a, grid, ops, coupling) -> float:
    lam, *_ = _positive_marginal_values(a, coupling, ops, adjoint=False)
    return float(np.min(lam))


def find_critical(params: NondimParams | None, grid: RadialGrid, ops: DiffOperators | None = None,
                  a_range: tuple[float, float] = (1.0, 8.0), search_tol: float = 1e-6,
                  coupling: Coupling | None = None, n_scan: int = 29) -> CriticalPoint:
    """Minimise the marginal value over the wavenumber.

    ``a_range`` is given in gap units (wavenumber times gap width) so the same
    default bracket serves every radius ratio; it is converted internally.
    """
    ops = ops or DiffOperators(grid)
    if coupling is None:
        coupling = cylindrical_coupling(params, grid)
    gap = grid.nodes[-1] - grid.nodes[0]
    lo, hi = a_range[0] / gap, a_range[1] / gap
    a_scan = np.linspace(lo, hi, n_scan)
    lam_scan = []
    for a in a_scan:
        try:
            lam_scan.append(marginal_lambda(a, grid, ops, coupling))
        except StabilityError:
            lam_scan.append(np.inf)
    lam_scan = np.array(lam_scan)
    flags = []
    if params is not None and params.mu < 0:
        flags.append("PES unverified")
    i = int(np.argmin(lam_scan))
    if not np.isfinite(lam_scan[i]):
        raise StabilityError("no marginal value anywhere in the scan range")
    if i == 0 or i == n_scan - 1:
        raise StabilityError("critical wavenumber outside scan range")
    finite = np.isfinite(lam_scan)
    interior_min = [
        j for j in range(1, n_scan - 1)
        if finite[j] and lam_scan[j] <= lam_scan[j - 1] and lam_scan[j] <= lam_scan[j + 1]
    ]
    if len(interior_min) > 1:
        flags.append("multiple local minima")
    res = minimize_scalar(
        lambda a: marginal_lambda(a, grid, ops, coupling),
        bounds=(a_scan[i - 1], a_scan[i + 1]),
        method="bounded",
        options={"xatol": search_tol * gap**-1 if gap < 1 else search_tol},
    )
    a_c = float(res.x)
    lam_c = float(res.fun)
    if lam_c > lam_scan[i]:
        a_c, lam_c = float(a_scan[i]), float(lam_scan[i])
    scan = tuple((float(a), float(l)) for a, l in zip(a_scan, lam_scan))
    return CriticalPoint(a_c, 2 * math.pi / a_c, lam_c, lam_c**2, tuple(flags), scan)


def _growth_blocks(a, lam, coupling, ops):
    n = ops.grid.size
    L = ops.L(a)
    A = np.zeros((2 * n, 2 * n))
    A[:n, :n] = L @ L
    A[:n, n:] = -a * a * lam * np.diag(coupling.c_r)
    A[n:, :n] = lam * np.diag(coupling.c_t)
    A[n:, n:] = L
    M = np.zeros_like(A)
    M[:n, :n] = L
    M[n:, n:] = np.eye(n)
    return A, M


def growth_spectrum(params, a, lam, grid, ops=None, coupling=None, shift=None):
    """Finite eigenvalues beta of the linearised operator, sorted by real part (descending)."""
    ops = ops or DiffOperators(grid)
    if coupling is None:
        coupling = cylindrical_coupling(params, grid)
    A, M = _growth_blocks(a, lam, coupling, ops)
    Ab, Mb, rows = embed_boundary_rows(A, MODE_BCS, ops, M)
    gap = grid.nodes[-1] - grid.nodes[0]
    sigma = shift if shift is not None else 0.7317 / gap**2
    # shift-invert: nu = 1/(beta - sigma); infinite betas map to nu = 0
    nu, vecs = np.linalg.eig(np.linalg.solve(Ab - sigma * Mb, Mb))
    keep = np.abs(nu) > 1e-9 * np.max(np.abs(nu))
    beta = sigma + 1.0 / nu[keep]
    vecs = vecs[:, keep]
    order = np.argsort(-beta.real)
    return beta[order], vecs[:, order]


def growth_rate(params: NondimParams | None, a: float, lam: float, grid: RadialGrid,
                ops: DiffOperators | None = None, coupling: Coupling | None = None) -> float:
    """Leading eigenvalue beta_1(lam) of the linearised problem at wavenumber ``a``."""
    beta, _ = growth_spectrum(params, a, lam, grid, ops, coupling)
    lead = beta[0]
    if abs(lead.imag) > 1e-8 * max(abs(lead), 1.0):
        log.warning("leading growth rate is complex (%s); returning its real part", lead)
    return float(lead.real)


def growth_curve(params, a, lambda_c, grid, ops=None, coupling=None,
                 rel_span: float = 0.1, n_samples: int = 9, rel_step: float = 1e-4) -> GrowthCurve:
    ops = ops or DiffOperators(grid)
    lams = lambda_c * (1.0 + np.linspace(-rel_span, rel_span, n_samples))
    samples = tuple((float(l), growth_rate(params, a, l, grid, ops, coupling)) for l in lams)
    d = rel_step * lambda_c
    slope = (growth_rate(params, a, lambda_c + d, grid, ops, coupling)
             - growth_rate(params, a, lambda_c - d, grid, ops, coupling)) / (2 * d)
    return GrowthCurve(samples, lambda_c, float(slope))


def mode_pairing(mode: StabilityMode, adjoint: AdjointMode) -> float:
    """(B psi_1, psi_1^*)_H for the z-periodic eigenvector pair."""
    g = mode.grid
    c = mode.coupling
    integrand = c.c_r * mode.phi_field * adjoint.hstar + c.c_t * mode.h * adjoint.phi_field
    return 0.5 * mode.L * mode.a * float(np.sum(g.quad_weights * integrand))


def mode_rho(mode: StabilityMode, adjoint: AdjointMode, ops: DiffOperators | None = None) -> float:
    """(psi_1, psi_1^*)_H."""
    ops = ops or DiffOperators(mode.grid)
    dh = ops.Dstar @ mode.h
    dhs = ops.Dstar @ adjoint.hstar
    integrand = dh * dhs + mode.a**2 * mode.h * adjoint.hstar + mode.phi_field * adjoint.phi_field
    return 0.5 * mode.L * float(np.sum(mode.grid.quad_weights * integrand))


@dataclass(frozen=True)
class PESReport:
    pairing_value: float
    pairing_sign: int
    integrand_nonnegative: bool
    positivity: dict
    slope_fd: float
    slope_pairing: float
    rho: float
    flags: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        return {
            "pairing_value": self.pairing_value,
            "pairing_sign": self.pairing_sign,
            "integrand_nonnegative": self.integrand_nonnegative,
            "positivity": dict(self.positivity),
            "slope_fd": self.slope_fd,
            "slope_pairing": self.slope_pairing,
            "rho": self.rho,
            "flags": list(self.flags),
        }


def pes_check(mode: StabilityMode, adjoint: AdjointMode, params: NondimParams | None,
              grid: RadialGrid, ops: DiffOperators | None = None, rel_step: float = 1e-4) -> PESReport:
    """Exchange-of-stability diagnostics for a consistent mode/adjoint pair."""
    ops = ops or DiffOperators(grid)
    pairing = mode_pairing(mode, adjoint)
    c = mode.coupling
    integrand = c.c_r * mode.phi_field * adjoint.hstar + c.c_t * mode.h * adjoint.phi_field
    scale = (np.sqrt(weighted_inner(mode.h, mode.h, grid) + weighted_inner(mode.phi_field, mode.phi_field, grid))
             * np.sqrt(weighted_inner(adjoint.hstar, adjoint.hstar, grid)
                       + weighted_inner(adjoint.phi_field, adjoint.phi_field, grid)))
    flags = []
    if abs(pairing) < 1e-10 * scale * mode.L * mode.a:
        flags.append("PES pairing degenerate")
    nonneg = bool(np.all(integrand[1:-1] >= 0))
    if not nonneg:
        flags.append("non-positive pairing integrand")
    hp, pp = mode.interior_positive()
    hsp, psp = adjoint.interior_positive()
    rho = mode_rho(mode, adjoint, ops)
    d = rel_step * mode.lambda0
    b_plus = growth_rate(params, mode.a, mode.lambda0 + d, grid, ops, mode.coupling)
    b_minus = growth_rate(params, mode.a, mode.lambda0 - d, grid, ops, mode.coupling)
    return PESReport(
        pairing_value=pairing,
        pairing_sign=int(np.sign(pairing)),
        integrand_nonnegative=nonneg,
        positivity={"h": hp, "phi": pp, "hstar": hsp, "phistar": psp},
        slope_fd=(b_plus - b_minus) / (2 * d),
        slope_pairing=pairing / rho,
        rho=rho,
        flags=tuple(flags),
    )
