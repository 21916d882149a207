"""Center-manifold correction fields and the transition coefficient R.

With ``psi_1`` the critical mode, the quadratic part of the center manifold
is the field ``Phi`` solving ``(A - lam0 B) Phi = G(psi_1, psi_1)``. The
forcing only has a z-mean and a 2a harmonic, so

    Phi = (0, 0, F0(r)) + (-sin 2az D_*g, 2a cos 2az g, cos 2az q),

where ``F0`` solves a Dirichlet problem for ``DD_*`` and ``(g, q)`` solve a
coupled fourth/second order system (the curl of the meridional equations, so
pressure never appears). Corrections are stored with the opposite sign
(``phi0 = -F0``, ``phi2 = -Phi_2``) so that ``Phi = -(phi0 + phi2)``.

R is assembled twice: once through generic field operations in
:mod:`axifield` and once from closed-form radial integrands (z already
integrated out), and the two must agree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import axifield as af
from .linstab import MODE_BCS, AdjointMode, StabilityMode, mode_rho
from .radial_ops import (
    BoundaryConditionSet,
    DiffOperators,
    RadialGrid,
    SingularOperatorError,
    bvp_residual,
    solve_linear_bvp,
)

PATH_RTOL = 1e-6
SOLVABILITY_TOL = 1e-8


class CenterManifoldError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class QuadraticForcings:
    a: float
    H1: np.ndarray
    H2: np.ndarray
    H3: np.ndarray


@dataclass(frozen=True, eq=False)
class CMCorrection:
    a: float
    phi0: np.ndarray
    phi2_z: np.ndarray
    phi2_r: np.ndarray
    phi2_theta: np.ndarray
    Phi_assembled: af.AxiField
    forcings: QuadraticForcings
    residuals: dict = field(default_factory=dict)

    # profiles of Phi itself, in the form used by the explicit integrals
    @property
    def F0(self) -> np.ndarray:
        return -self.phi0

    @property
    def g(self) -> np.ndarray:
        return -self.phi2_r / (2.0 * self.a)

    @property
    def q(self) -> np.ndarray:
        return -self.phi2_theta

    def scaled(self, c: float) -> "CMCorrection":
        return CMCorrection(self.a, c * self.phi0, c * self.phi2_z, c * self.phi2_r,
                            c * self.phi2_theta, self.Phi_assembled.scale(c), self.forcings,
                            dict(self.residuals))


@dataclass(frozen=True)
class TransitionCoefficient:
    R: float
    rho: float
    assembly_path: str
    R_inner: float
    R_explicit: float
    rel_diff: float
    gauge: dict
    terms: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "R": self.R,
            "rho": self.rho,
            "assembly_path": self.assembly_path,
            "R_inner_product": self.R_inner,
            "R_explicit_integral": self.R_explicit,
            "relative_difference": self.rel_diff,
            "gauge": dict(self.gauge),
            "terms": dict(self.terms),
            "flags": list(self.flags),
        }


def _curv(grid: RadialGrid):
    if grid.planar:
        return 0.0, np.zeros(grid.size), np.ones(grid.size)
    return 1.0, 1.0 / grid.nodes, grid.nodes


def quadratic_forcings(mode: StabilityMode, ops: DiffOperators) -> QuadraticForcings:
    a = mode.a
    h, p = mode.h, mode.phi_field
    _, ir, _ = _curv(mode.grid)
    Dh = ops.apply("D", h)
    Dsh = Dh + ir * h
    DDsh = ops.apply("DDstar", h)
    Dp = ops.apply("D", p)
    H1 = a * (Dsh**2 - h * DDsh)
    H2 = a * a * h * Dh - a * a * h * Dsh - ir * p**2
    H3 = a * (h * Dp - p * Dsh + ir * p * h)
    return QuadraticForcings(a, H1, H2, H3)


def solve_dirichlet_DDstar(rhs: np.ndarray, ops: DiffOperators) -> np.ndarray:
    """``DD_* y = rhs`` with ``y = 0`` at both walls."""
    return solve_linear_bvp(ops.DDstar, rhs, BoundaryConditionSet.dirichlet(1), ops)


def mean_forcing(mode: StabilityMode, ops: DiffOperators) -> np.ndarray:
    a = mode.a
    h, p = mode.h, mode.phi_field
    _, ir, _ = _curv(mode.grid)
    return 0.5 * a * (p * ops.apply("Dstar", h) + h * ops.apply("D", p) + ir * p * h)


def solve_phi0(mode: StabilityMode, grid: RadialGrid, ops: DiffOperators | None = None) -> np.ndarray:
    """Mean swirl correction in the stored sign, ``phi0 = -F0``."""
    ops = ops or DiffOperators(grid)
    return -solve_dirichlet_DDstar(mean_forcing(mode, ops), ops)


def _harmonic_system(mode: StabilityMode, ops: DiffOperators):
    a, lam = mode.a, mode.lambda0
    n = ops.grid.size
    L2a = ops.DDstar - 4 * a * a * ops.I
    A = np.zeros((2 * n, 2 * n))
    A[:n, :n] = L2a @ L2a
    A[:n, n:] = -2 * a * lam * np.diag(mode.coupling.c_r)
    A[n:, :n] = 2 * a * lam * np.diag(mode.coupling.c_t)
    A[n:, n:] = L2a
    return A


def solve_phi2(params, mode: StabilityMode, forcings: QuadraticForcings, grid: RadialGrid,
               ops: DiffOperators | None = None):
    """2a-harmonic correction ``(phi_z, phi_r, phi_theta)`` in the stored sign.

    Returns the three profiles and a residual record. ``phi_z = D_* phi_r / (2a)``
    holds by construction.
    """
    ops = ops or DiffOperators(grid)
    a = mode.a
    A = _harmonic_system(mode, ops)
    rhs = np.concatenate([
        -a * forcings.H2 - 0.5 * ops.apply("D", forcings.H1),
        0.5 * forcings.H3,
    ])
    try:
        x = solve_linear_bvp(A, rhs, MODE_BCS, ops)
    except SingularOperatorError as exc:
        raise CenterManifoldError(f"harmonic resonance: 2a eigenvalue collision ({exc})") from exc
    n = grid.size
    g, q = x[:n], x[n:]
    res = bvp_residual(A, x, rhs, MODE_BCS, ops)
    phi_r = -2 * a * g
    phi_z = ops.apply("Dstar", phi_r) / (2 * a)
    return phi_z, phi_r, -q, res


def correction_field(a: float, grid: RadialGrid, ops: DiffOperators, F0, g, q) -> af.AxiField:
    f = af.AxiField.zeros(a, grid, 2)
    _, ir, _ = _curv(grid)
    af.add_trig(f, af.T, "cos", 0, F0)
    af.add_trig(f, af.Z, "sin", 2, -(ops.apply("D", g) + ir * g))
    af.add_trig(f, af.R, "cos", 2, 2 * a * g)
    af.add_trig(f, af.T, "cos", 2, q)
    return f


def compute_corrections(params, mode: StabilityMode, ops: DiffOperators | None = None) -> CMCorrection:
    grid = mode.grid
    ops = ops or DiffOperators(grid)
    if not np.any(mode.h) or not np.any(mode.phi):
        z = np.zeros(grid.size)
        return CMCorrection(mode.a, z, z, z, z, af.AxiField.zeros(mode.a, grid, 2),
                            QuadraticForcings(mode.a, z, z, z), {"degenerate": True})
    forc = quadratic_forcings(mode, ops)
    mean_rhs = mean_forcing(mode, ops)
    F0 = solve_dirichlet_DDstar(mean_rhs, ops)
    phi_z, phi_r, phi_t, res2 = solve_phi2(params, mode, forc, grid, ops)
    g, q = -phi_r / (2 * mode.a), -phi_t
    Phi = correction_field(mode.a, grid, ops, F0, g, q)
    div = af.divergence(Phi, ops)
    scale = max(Phi.norm(), 1e-300)
    residuals = {
        "phi0": bvp_residual(ops.DDstar, F0, mean_rhs, BoundaryConditionSet.dirichlet(1), ops),
        "phi2": res2,
        "divergence": float(np.max(np.abs(div.coef[af.Z]))) / scale,
    }
    return CMCorrection(mode.a, -F0, phi_z, phi_r, phi_t, Phi, forc, residuals)


# --- R assembly ---------------------------------------------------------------

def _explicit_terms(a, r, c, ir, w, h, Dh, D2h, p, Dp, hs, Dhs, ps, g, Dg, D2g, q, Dq, F0, DF0):
    """Radial integrands of the nine advective/swirl pairings, z already integrated.

    Each entry times ``pi/a`` integrated over the gap gives one term of
    ``-( G(Phi, psi) + G(psi, Phi), psi^* )_H``; ``c`` is 1 on the annulus and 0
    on the planar gap (``w`` the radial weight, ``ir`` = 1/r or 0).
    """
    return {
        "adv_phi_psi_z": a * (w * (-D2h * Dhs * g - 0.5 * Dg * Dh * Dhs)
                              + c * (-D2h * g * hs - 0.5 * Dg * Dh * hs - 0.5 * Dg * Dhs * h
                                     - 0.5 * Dg * h * hs * ir - 1.5 * Dh * Dhs * g - 1.5 * Dh * g * hs * ir
                                     + 0.5 * Dhs * g * h * ir + 0.5 * g * h * hs * ir**2)),
        "adv_psi_phi_z": a * (w * (0.5 * D2g * Dhs * h + Dg * Dh * Dhs)
                              + c * (0.5 * D2g * h * hs + Dg * Dh * hs + 1.5 * Dg * Dhs * h
                                     + 1.5 * Dg * h * hs * ir + Dh * Dhs * g + Dh * g * hs * ir
                                     + 0.5 * Dhs * g * h * ir + 0.5 * g * h * hs * ir**2)),
        "adv_phi_psi_r": a**3 * hs * (w * (0.5 * Dg * h + Dh * g) + c * 0.5 * g * h),
        "adv_psi_phi_r": a**3 * hs * (w * (Dg * h + 2 * Dh * g) + c * 2 * g * h),
        "adv_phi_psi_t": a * ps * (w * (0.5 * Dg * p + Dp * g) + c * 0.5 * g * p),
        "adv_psi_phi_t": a * ps * (w * (DF0 * h + Dh * q + 0.5 * Dq * h) + c * h * q),
        "swirl_phi_t_psi_r": c * a * h * ps * (F0 + 0.5 * q),
        "swirl_psi_t_phi_r": c * a * g * p * ps,
        "swirl_cross_r": -c * a * hs * p * (2 * F0 + q),
    }


def explicit_integral_terms(mode: StabilityMode, adjoint: AdjointMode, corr: CMCorrection,
                            ops: DiffOperators) -> dict:
    grid = mode.grid
    a = mode.a
    c, ir, w = _curv(grid)
    D = lambda f: ops.apply("D", f)
    h, p = mode.h, mode.phi_field
    hs, ps = adjoint.hstar, adjoint.phi_field
    g, q, F0 = corr.g, corr.q, corr.F0
    Dh, Dg = D(h), D(g)
    integrands = _explicit_terms(a, grid.nodes, c, ir, w, h, Dh, D(Dh), p, D(p), hs, D(hs), ps,
                                 g, Dg, D(Dg), q, D(q), F0, D(F0))
    pw = grid.plain_weights
    return {k: -(math.pi / a) * float(np.sum(pw * v)) for k, v in integrands.items()}


def rho_of(mode: StabilityMode, adjoint: AdjointMode, ops: DiffOperators) -> float:
    return mode_rho(mode, adjoint, ops)


def compute_R(params, mode: StabilityMode, adjoint: AdjointMode, corrections: CMCorrection,
              grid: RadialGrid, ops: DiffOperators | None = None, check: bool = True) -> TransitionCoefficient:
    ops = ops or DiffOperators(grid)
    gauge = {"mode": mode.normalization, "adjoint": adjoint.normalization}
    if not np.any(mode.h) or not np.any(mode.phi):
        return TransitionCoefficient(0.0, 0.0, "inner_product", 0.0, 0.0, 0.0, gauge, {},
                                     ("degenerate mode",))
    rho = rho_of(mode, adjoint, ops)
    f = af.eigen_fields(mode, adjoint, ops)
    psi, adj = f["psi"], f["adj"]
    if abs(rho) < 1e-10 * psi.norm() * adj.norm():
        raise CenterManifoldError("degenerate normalization: (psi_1, psi_1^*)_H ~ 0")
    Phi = corrections.Phi_assembled
    t_a = af.trilinear(Phi, psi, adj, ops)
    t_b = af.trilinear(psi, Phi, adj, ops)
    R_inner = (t_a + t_b) / rho
    terms = explicit_integral_terms(mode, adjoint, corrections, ops)
    total = sum(terms.values())
    R_explicit = total / rho
    scale = max(abs(R_inner), abs(R_explicit), 1e-300)
    rel = abs(R_inner - R_explicit) / scale
    per_term = {k: v / rho for k, v in sorted(terms.items())}
    if check and rel > PATH_RTOL:
        detail = ", ".join(f"{k}={v:.6e}" for k, v in per_term.items())
        raise CenterManifoldError(
            f"R assembly paths disagree: inner={R_inner:.10e} explicit={R_explicit:.10e} "
            f"(rel {rel:.2e}); terms: {detail}"
        )
    flags = []
    if params is not None and getattr(params, "mu", 0.0) < 0:
        flags.append("PES unverified")
    return TransitionCoefficient(R_inner, rho, "inner_product", R_inner, R_explicit, rel, gauge,
                                 per_term, tuple(flags))


def transition_coefficient(params, mode: StabilityMode, adjoint: AdjointMode,
                           ops: DiffOperators | None = None):
    """Corrections and R in one call."""
    ops = ops or DiffOperators(mode.grid)
    corr = compute_corrections(params, mode, ops)
    return corr, compute_R(params, mode, adjoint, corr, mode.grid, ops)


def trilinear(u: af.AxiField, v: af.AxiField, w: af.AxiField, ops: DiffOperators,
              div_tol: float = 1e-8) -> float:
    """``(G(u, v), w)_H``; warns when ``u`` is not discretely divergence-free."""
    div = af.divergence(u, ops)
    if np.max(np.abs(div.coef)) > div_tol * max(u.norm(), 1e-300) * u.a * 10:
        import warnings
        warnings.warn("advecting field is not divergence-free; antisymmetry may fail", RuntimeWarning)
    return af.trilinear(u, v, w, ops)


@dataclass(frozen=True)
class SolvabilityResidual:
    cos_pairing: float
    tilde_pairing: float
    scale: float

    @property
    def relative(self) -> tuple[float, float]:
        return self.cos_pairing / self.scale, self.tilde_pairing / self.scale


def solvability_check(mode: StabilityMode, adjoint: AdjointMode, grid: RadialGrid,
                      ops: DiffOperators | None = None, tol: float = SOLVABILITY_TOL) -> SolvabilityResidual:
    ops = ops or DiffOperators(grid)
    f = af.eigen_fields(mode, adjoint, ops)
    gpp = af.G(f["psi"], f["psi"], ops)
    r1 = abs(af.inner(gpp, f["adj"]))
    r2 = abs(af.inner(gpp, f["adj_t"]))
    scale = max(gpp.norm() * f["adj"].norm(), 1e-300)
    out = SolvabilityResidual(r1, r2, scale)
    if max(out.relative) > tol:
        raise CenterManifoldError(
            "solvability of the quadratic correction fails numerically; inspect z-harmonic bookkeeping"
        )
    return out


def planar_self_adjoint_R(mode: StabilityMode, corr: CMCorrection, ops: DiffOperators) -> dict:
    """For a self-adjoint problem (adjoint = mode) R also equals ``-(G(psi,psi), Phi)/|psi|^2``.

    Returns both values so the identity can be checked.
    """
    psi = af.mode_field(mode.h, mode.phi_field, mode.a, mode.grid, ops)
    Phi = corr.Phi_assembled
    nrm = af.inner(psi, psi)
    direct = (af.trilinear(Phi, psi, psi, ops) + af.trilinear(psi, Phi, psi, ops)) / nrm
    energy = -af.inner(af.G(psi, psi, ops), Phi) / nrm
    return {"R_direct": direct, "R_energy": energy}
