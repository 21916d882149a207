"""Transition classification, the truncated amplitude equations and report assembly."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import centermanifold as cm
from . import linstab as ls
from .params import NondimParams
from .radial_ops import DiffOperators, build_grid

TYPE_I = "TypeI_continuous"
TYPE_II = "TypeII_jump"
INDETERMINATE = "indeterminate"


class TransitionError(RuntimeError):
    pass


def classify(R: float, tol: float = 1e-8, scale: float = 1.0) -> str:
    """Sign classification with an indeterminacy band of half-width ``tol * scale``."""
    if not math.isfinite(R):
        raise ValueError("R must be finite")
    band = tol * abs(scale)
    if R < -band:
        return TYPE_I
    if R > band:
        return TYPE_II
    return INDETERMINATE


def bifurcated_amplitude(beta1: float, R: float) -> float:
    if R >= 0:
        raise TransitionError("no supercritical circle for Type-II")
    if beta1 < 0:
        raise ValueError("beta1 must be non-negative on the bifurcated branch")
    return math.sqrt(beta1 / abs(R))


def closed_form_radius(r0: float, beta1: float, R: float, t):
    """Exact radius of the truncated system for ``R < 0``."""
    t = np.asarray(t, dtype=float)
    if beta1 == 0:
        return r0 / np.sqrt(1.0 + 2.0 * abs(R) * r0**2 * t)
    e = np.exp(2 * beta1 * t)
    return np.sqrt(beta1 * r0**2 * e / (beta1 + abs(R) * r0**2 * (e - 1.0)))


@dataclass(frozen=True)
class AmplitudeState:
    x: float
    y: float
    t: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    escaped: bool = False
    message: str = ""

    @property
    def radius(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    def states(self):
        return [AmplitudeState(float(a), float(b), float(c)) for a, b, c in zip(self.x, self.y, self.t)]

    def final(self) -> AmplitudeState:
        return AmplitudeState(float(self.x[-1]), float(self.y[-1]), float(self.t[-1]))


def _rhs(s: np.ndarray, beta1: float, R: float) -> np.ndarray:
    return s * (beta1 + R * (s[0] ** 2 + s[1] ** 2))


def integrate_reduced(x0: float, y0: float, beta1: float, R: float, t_span: float, dt: float,
                      cap_factor: float = 10.0, record_every: int = 1) -> Trajectory:
    """Classical RK4 for ``x' = b x + R x (x^2+y^2)``, ``y' = b y + R y (x^2+y^2)``.

    Integration stops early once the radius exceeds ``cap_factor`` times the
    circle radius ``sqrt(|beta1/R|)`` (or the starting radius when that is zero).
    """
    nsteps = int(round(t_span / dt))
    s = np.array([x0, y0], dtype=float)
    base = math.sqrt(abs(beta1 / R)) if R != 0 and beta1 != 0 else 0.0
    cap = cap_factor * max(base, math.hypot(x0, y0), 1e-300)
    ts, xs, ys = [0.0], [s[0]], [s[1]]
    escaped = False
    for i in range(1, nsteps + 1):
        k1 = _rhs(s, beta1, R)
        k2 = _rhs(s + 0.5 * dt * k1, beta1, R)
        k3 = _rhs(s + 0.5 * dt * k2, beta1, R)
        k4 = _rhs(s + dt * k3, beta1, R)
        s = s + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(s)) or math.hypot(*s) > cap:
            escaped = True
            ts.append(i * dt)
            xs.append(s[0])
            ys.append(s[1])
            break
        if i % record_every == 0 or i == nsteps:
            ts.append(i * dt)
            xs.append(s[0])
            ys.append(s[1])
    msg = "escaped normal-form validity region" if escaped else ""
    return Trajectory(np.array(ts), np.array(xs), np.array(ys), escaped, msg)


@dataclass(frozen=True)
class TransitionReport:
    T_c: float
    a_c: float
    L_c: float
    lambda_c: float
    R: float
    rho: float
    type: str
    amplitude_law: tuple[tuple[float, float], ...] | None
    flags: tuple[str, ...]
    gauge: dict
    grid: dict
    coefficient: dict = field(default_factory=dict)
    pes: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "T_c": self.T_c,
            "a_c": self.a_c,
            "L_c": self.L_c,
            "lambda_c": self.lambda_c,
            "R": self.R,
            "rho": self.rho,
            "type": self.type,
            "amplitude_law": None if self.amplitude_law is None
            else [{"lambda": l, "radius": r} for l, r in self.amplitude_law],
            "flags": list(self.flags),
            "gauge": dict(self.gauge),
            "grid": dict(self.grid),
            "coefficient": dict(self.coefficient),
            "pes": dict(self.pes),
            "notes": list(self.notes),
        }


def assemble_report(critical: ls.CriticalPoint, coef: cm.TransitionCoefficient, pes: ls.PESReport,
                    growth: ls.GrowthCurve, grid_meta: dict | None = None, tol: float = 1e-8) -> TransitionReport:
    if abs(growth.lambda_c - critical.lambda_c) > 1e-9 * critical.lambda_c:
        raise TransitionError("mixed provenance: growth curve and critical point disagree on lambda_c")
    scale = sum(abs(v) for v in coef.terms.values()) or abs(coef.R)
    kind = classify(coef.R, tol, scale)
    flags = list(dict.fromkeys(critical.flags + pes.flags + coef.flags))
    notes = []
    law = None
    if kind == TYPE_I:
        pts = sorted((l, b) for l, b in growth.samples if l >= critical.lambda_c)
        law = tuple((l, math.sqrt(max(b, 0.0) / abs(coef.R))) for l, b in pts)
    elif kind == TYPE_II:
        notes.append("jump transition: hysteresis expected; bracket T* with dns.bracket_Tstar")
    else:
        notes.append("R within the indeterminacy band: rerun at higher resolution")
    return TransitionReport(
        T_c=critical.T_c,
        a_c=critical.a_c,
        L_c=critical.L_c,
        lambda_c=critical.lambda_c,
        R=coef.R,
        rho=coef.rho,
        type=kind,
        amplitude_law=law,
        flags=tuple(flags),
        gauge=dict(coef.gauge),
        grid=dict(grid_meta or {}),
        coefficient=coef.as_dict(),
        pes=pes.as_dict(),
        notes=tuple(notes),
    )


@dataclass(frozen=True, eq=False)
class PipelineResult:
    params: NondimParams
    critical: ls.CriticalPoint
    mode: ls.StabilityMode
    adjoint: ls.AdjointMode
    corrections: cm.CMCorrection
    coefficient: cm.TransitionCoefficient
    pes: ls.PESReport
    growth: ls.GrowthCurve
    report: TransitionReport
    ops: DiffOperators


def analyze(params: NondimParams, n: int = 64, a_range=(1.0, 8.0), search_tol: float = 1e-6,
            scheme: str = "collocation") -> PipelineResult:
    """Critical point, eigen/adjoint pair, corrections, R and the report for one (eta, mu)."""
    grid = build_grid(params.eta, n, scheme)
    ops = DiffOperators(grid)
    crit = ls.find_critical(params, grid, ops, a_range, search_tol)
    mode = ls.solve_marginal(params, crit.a_c, grid, ops)
    adj = ls.solve_adjoint(params, crit.a_c, mode.lambda0, grid, ops)
    corr, coef = cm.transition_coefficient(params, mode, adj, ops)
    pes = ls.pes_check(mode, adj, params, grid, ops)
    growth = ls.growth_curve(params, crit.a_c, crit.lambda_c, grid, ops, rel_span=0.1, n_samples=5)
    report = assemble_report(crit, coef, pes, growth, grid.metadata())
    return PipelineResult(params, crit, mode, adj, corr, coef, pes, growth, report, ops)
