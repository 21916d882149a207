"""Desk-scale time stepper for axisymmetric z-periodic perturbations of Couette flow.

Each z-Fourier mode ``k != 0`` carries a stream function ``Psi_k`` (``u_r =
dPsi/dz``, ``u_z = -D_* Psi``) and the swirl ``v_k = u_theta``; the mean mode
carries the axial and azimuthal profiles ``W`` and ``V``. The meridional
equation is the azimuthal vorticity equation, so continuity holds by
construction and pressure never appears.

Radial discretisation reuses the Chebyshev operators of :mod:`radial_ops`,
which makes linear growth rates directly comparable with
:func:`linstab.growth_rate`. Time stepping is IMEX SBDF2: diffusion and the
rotational coupling implicit (one prefactored LU per mode), advection
explicit, 2/3-rule dealiasing in z.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fields as fl
from . import linstab as ls
from .linstab import MODE_BCS
from .params import NondimParams
from .radial_ops import BoundaryConditionSet, DiffOperators, build_grid, embed_boundary_rows

log = logging.getLogger(__name__)


class DNSError(RuntimeError):
    pass


@dataclass(frozen=True)
class DNSConfig:
    params: NondimParams
    L: float | None = None
    nr: int = 64
    nz: int = 64
    dt: float | None = None
    t_end: float = 1.0
    init: str = "eigen"  # eigen | random | snapshot | state
    init_eps: float = 1e-3
    seed: int = 0
    snapshot: str | None = None
    sample_every: int = 10
    cfl_max: float = 0.5
    dump_path: str | None = None
    adaptive: bool = False  # halve dt instead of aborting when the CFL number nears cfl_max

    def __post_init__(self):
        if self.nz % 2:
            raise ValueError("nz must be even")
        if self.params.taylor is None:
            raise ValueError("DNS needs a Taylor number in params")
        if self.init not in ("eigen", "random", "snapshot", "state"):
            raise ValueError(f"unknown init {self.init!r}")

    def resolved_dt(self) -> float:
        return self.dt if self.dt is not None else default_dt(self.params.eta)

    def as_dict(self) -> dict:
        return {
            "eta": self.params.eta,
            "mu": self.params.mu,
            "taylor": self.params.taylor,
            "L": self.L,
            "nr": self.nr,
            "nz": self.nz,
            "dt": self.resolved_dt(),
            "t_end": self.t_end,
            "init": self.init,
            "init_eps": self.init_eps,
            "seed": self.seed,
            "sample_every": self.sample_every,
            "adaptive": self.adaptive,
        }


def default_dt(eta: float) -> float:
    """Scales with the squared gap (5e-5 at eta = 0.9).

    Saturated vortices near onset reach an advective CFL number of about 0.3
    at this step on the default 64 x 64 grid.
    """
    return 0.005 * (1.0 - eta) ** 2


@dataclass(frozen=True, eq=False)
class DNSTimeSeries:
    t: np.ndarray
    energy: np.ndarray
    A: np.ndarray
    Atilde: np.ndarray
    flux: np.ndarray
    norm: np.ndarray
    sample_interval: float

    @property
    def amplitude(self) -> np.ndarray:
        return np.hypot(self.A, self.Atilde)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "energy", "A", "Atilde", "flux"])
        for row in zip(self.t, self.energy, self.A, self.Atilde, self.flux):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class DNSResult:
    series: DNSTimeSeries
    final: fl.FieldSnapshot
    state: "SpectralState"
    config: DNSConfig


@dataclass(eq=False)
class SpectralState:
    """rfft coefficients along z; index 0 is the mean mode."""

    psi: np.ndarray  # (nr, nk) complex, column 0 unused
    v: np.ndarray    # (nr, nk) complex
    W: np.ndarray    # (nr,) real mean axial velocity

    def copy(self) -> "SpectralState":
        return SpectralState(self.psi.copy(), self.v.copy(), self.W.copy())


class AxisymmetricSolver:
    """Holds operators and factorizations for one (params, grid, L, dt)."""

    def __init__(self, params: NondimParams, nr: int, nz: int, L: float, dt: float):
        self.params = params
        self.grid = build_grid(params.eta, nr)
        self.ops = DiffOperators(self.grid)
        self.nz, self.L, self.dt = nz, L, dt
        self.lam = math.sqrt(params.taylor)
        self.r = self.grid.nodes
        self.nk = nz // 2 + 1
        self.kz = 2 * math.pi / L * np.arange(self.nk)
        self.kmax = nz // 3
        cpl = ls.cylindrical_coupling(params, self.grid)
        self.c_r, self.c_t = cpl.c_r, cpl.c_t
        self.z = np.arange(nz) * (L / nz)
        self._factor_cache = {}
        self._factor(1.0)
        self._factor_cache[1.0] = (self.inv, self.inv_w, self.inv_v)

    def set_dt(self, dt: float) -> None:
        self.dt = dt
        self._factor_cache = {}
        self._factor(1.0)
        self._factor_cache[1.0] = (self.inv, self.inv_w, self.inv_v)

    # -- linear algebra --------------------------------------------------------
    def _mode_matrix(self, k: int, gamma: float):
        n = self.grid.size
        ops = self.ops
        q = self.kz[k]
        Lq = ops.DDstar - q * q * ops.I
        A = np.zeros((2 * n, 2 * n), dtype=complex)
        A[:n, :n] = gamma / self.dt * Lq - Lq @ Lq
        A[:n, n:] = -1j * q * self.lam * np.diag(self.c_r)
        A[n:, :n] = -1j * q * self.lam * np.diag(self.c_t)
        A[n:, n:] = gamma / self.dt * ops.I - Lq
        Ab, rows = embed_boundary_rows(A, MODE_BCS, ops)
        return Ab, rows, Lq

    def _factor(self, gamma: float):
        """Inverse operators for all active modes, stacked for batched application."""
        ops = self.ops
        self.gamma = gamma
        inv, lq = [], []
        for k in range(1, self.kmax + 1):
            Ab, _, Lq = self._mode_matrix(k, gamma)
            inv.append(np.linalg.inv(Ab))
            lq.append(Lq)
        self.inv = np.stack(inv)
        self.Lq = np.stack(lq).astype(complex)
        dir1 = BoundaryConditionSet.dirichlet(1)
        Mw, _ = embed_boundary_rows(gamma / self.dt * ops.I - ops.DstarD, dir1, ops)
        Mv, _ = embed_boundary_rows(gamma / self.dt * ops.I - ops.DDstar, dir1, ops)
        self.inv_w = np.linalg.inv(Mw)
        self.inv_v = np.linalg.inv(Mv)

    def _mode_bc_rows(self):
        n = self.grid.size
        return [0, n - 1, 1, n - 2, n, 2 * n - 1]

    # -- transforms ----------------------------------------------------------------
    def physical(self, s: SpectralState):
        """u_z, u_r, u_theta, omega on the (nr, nz) grid."""
        D = self.ops.D
        ir = 1.0 / self.r
        ik = 1j * self.kz[None, :]
        psi = s.psi.copy()
        psi[:, 0] = 0.0
        ur_h = ik * psi
        uz_h = -(D @ psi + ir[:, None] * psi)
        uz_h[:, 0] = s.W * self.nz
        om_h = ik * ur_h - D @ uz_h
        inv = lambda c: np.fft.irfft(c, n=self.nz, axis=1)
        return inv(uz_h), inv(ur_h), inv(s.v), inv(om_h)

    def from_physical(self, uz, ur, ut) -> SpectralState:
        f = lambda a: np.fft.rfft(a, axis=1)
        ur_h, ut_h, uz_h = f(ur), f(ut), f(uz)
        psi = np.zeros_like(ur_h)
        psi[:, 1:] = ur_h[:, 1:] / (1j * self.kz[None, 1:])
        self._truncate(psi)
        self._truncate(ut_h)
        return SpectralState(psi, ut_h, uz_h[:, 0].real / self.nz)

    def _truncate(self, c: np.ndarray):
        c[:, self.kmax + 1:] = 0.0
        if self.nz % 2 == 0:
            c[:, -1] = 0.0

    # -- right-hand sides -----------------------------------------------------------
    def nonlinear(self, s: SpectralState):
        D = self.ops.D
        ir = (1.0 / self.r)[:, None]
        uz, ur, ut, om = self.physical(s)
        dz = lambda a: np.fft.irfft(1j * self.kz[None, :] * np.fft.rfft(a, axis=1), n=self.nz, axis=1)
        n_om = -(ur * (D @ om) + uz * dz(om) - ur * om * ir) + dz(ut * ut) * ir
        n_t = -(ur * (D @ ut) + uz * dz(ut) + ur * ut * ir)
        n_z = -(ur * (D @ uz) + uz * dz(uz))
        f = lambda a: np.fft.rfft(a, axis=1)
        No, Nt, Nz = f(n_om), f(n_t), f(n_z)
        for c in (No, Nt, Nz):
            self._truncate(c)
        return No, Nt, Nz[:, 0].real / self.nz, (uz, ur, ut)

    def step(self, s: SpectralState, s_prev: SpectralState | None, N, N_prev):
        """One SBDF2 step (SBDF1 when ``s_prev`` is None)."""
        No, Nt, Nz = N[:3]
        if s_prev is None:
            gamma, a0, a1 = 1.0, 1.0, 0.0
            eo, et, ez = No, Nt, Nz
        else:
            gamma, a0, a1 = 1.5, 2.0, -0.5
            eo, et, ez = 2 * No - N_prev[0], 2 * Nt - N_prev[1], 2 * Nz - N_prev[2]
        if gamma != self.gamma:
            if gamma not in self._factor_cache:
                self._factor(gamma)
                self._factor_cache[gamma] = (self.inv, self.inv_w, self.inv_v)
            self.inv, self.inv_w, self.inv_v = self._factor_cache[gamma]
            self.gamma = gamma
        n = self.grid.size
        dt = self.dt
        ks = slice(1, self.kmax + 1)
        hist = lambda cur, old: a0 * cur + (a1 * old if s_prev is not None else 0.0)
        psi_h = hist(s.psi[:, ks], s_prev.psi[:, ks] if s_prev is not None else None).T
        v_h = hist(s.v[:, ks], s_prev.v[:, ks] if s_prev is not None else None).T
        rhs = np.concatenate([np.matmul(self.Lq, psi_h[..., None])[..., 0] / dt + eo[:, ks].T,
                              v_h / dt + et[:, ks].T], axis=1)
        rhs[:, self._mode_bc_rows()] = 0.0
        x = np.matmul(self.inv, rhs[..., None])[..., 0]
        out = SpectralState(np.zeros_like(s.psi), np.zeros_like(s.v), np.zeros_like(s.W))
        out.psi[:, ks] = x[:, :n].T
        out.v[:, ks] = x[:, n:].T
        rw = hist(s.W, s_prev.W if s_prev is not None else None) / dt + ez
        rw[[0, n - 1]] = 0.0
        out.W = self.inv_w @ rw
        rv = hist(s.v[:, 0].real, s_prev.v[:, 0].real if s_prev is not None else None) / dt + et[:, 0].real
        rv[[0, n - 1]] = 0.0
        out.v[:, 0] = self.inv_v @ rv
        return out


def _quad(solver: AxisymmetricSolver, f: np.ndarray) -> float:
    """``int_0^L int r f dr dz`` for an (nr, nz) array."""
    return float(np.sum(solver.grid.quad_weights * f.mean(axis=1)) * solver.L)


def _projection_fields(solver: AxisymmetricSolver, mode: ls.StabilityMode, adj: ls.AdjointMode):
    ops = solver.ops
    a = 2 * math.pi / solver.L
    z = solver.z[None, :]
    c, s = np.cos(a * z), np.sin(a * z)
    dsh = ops.Dstar @ adj.hstar
    ps = adj.phi_field
    cos_f = (-s * dsh[:, None], a * c * adj.hstar[:, None], c * ps[:, None])
    tilde = (c * dsh[:, None], a * s * adj.hstar[:, None], s * ps[:, None])
    return cos_f, tilde


def _seed(solver: AxisymmetricSolver, cfg: DNSConfig, mode: ls.StabilityMode) -> SpectralState:
    nr = solver.grid.size
    if cfg.init == "eigen":
        a = 2 * math.pi / solver.L
        z = solver.z[None, :]
        dsh = solver.ops.Dstar @ mode.h
        uz = -np.sin(a * z) * dsh[:, None]
        ur = a * np.cos(a * z) * mode.h[:, None]
        ut = np.cos(a * z) * mode.phi_field[:, None]
        return solver.from_physical(*(cfg.init_eps * f for f in (uz, ur, ut)))
    if cfg.init == "random":
        rng = np.random.default_rng(cfg.seed)
        x = (solver.r - solver.r[0]) / (solver.r[-1] - solver.r[0])
        bump2 = (x * (1 - x)) ** 2
        bump1 = x * (1 - x)
        psi = np.zeros((nr, solver.nk), dtype=complex)
        v = np.zeros((nr, solver.nk), dtype=complex)
        for k in range(1, min(4, solver.kmax) + 1):
            cp = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            cv = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            poly = lambda c: c[0] + c[1] * x + c[2] * x * x
            psi[:, k] = bump2 * poly(cp)
            v[:, k] = bump1 * poly(cv)
        s = SpectralState(psi, v, np.zeros(nr))
        uz, ur, ut, _ = solver.physical(s)
        scale = cfg.init_eps / max(np.max(np.abs(ur)), np.max(np.abs(uz)), np.max(np.abs(ut)), 1e-300)
        return SpectralState(psi * scale, v * scale, np.zeros(nr))
    if cfg.init == "snapshot":
        snap = fl.read_snapshot(cfg.snapshot)
        if snap.u_z.shape != (nr, solver.nz) or not np.allclose(snap.r_nodes, solver.r):
            raise DNSError("snapshot grid does not match the DNS grid")
        return solver.from_physical(snap.u_z, snap.u_r, snap.u_theta)
    raise DNSError("init 'state' requires an explicit initial state")


def critical_for(params: NondimParams, nr: int):
    grid = build_grid(params.eta, nr)
    ops = DiffOperators(grid)
    return ls.find_critical(params, grid, ops)


def run(config: DNSConfig, state: SpectralState | None = None,
        projection: tuple[ls.StabilityMode, ls.AdjointMode] | None = None,
        solver: AxisymmetricSolver | None = None) -> DNSResult:
    """March the perturbation equations to ``t_end``."""
    p = config.params
    L = config.L
    if L is None:
        L = critical_for(p, config.nr).L_c
        config = replace(config, L=L)
    dt = config.resolved_dt()
    if solver is None or solver.dt != dt or solver.L != L or solver.lam != math.sqrt(p.taylor):
        solver = AxisymmetricSolver(p, config.nr, config.nz, L, dt)
    a = 2 * math.pi / L
    if projection is None:
        mode = ls.solve_marginal(p, a, solver.grid, solver.ops)
        adj = ls.solve_adjoint(p, a, mode.lambda0, solver.grid, solver.ops)
    else:
        mode, adj = projection
    rho = ls.mode_rho(mode, adj, solver.ops)
    proj, proj_t = _projection_fields(solver, mode, adj)
    s = state.copy() if state is not None else _seed(solver, config, mode)

    gaps = np.diff(solver.r)
    dr_local = np.minimum(np.r_[gaps[0], gaps], np.r_[gaps, gaps[-1]])[:, None]
    dz = L / config.nz
    ts, es, As, Ats, fx, nm = [], [], [], [], [], []

    def record(t, phys):
        uz, ur, ut = phys
        e = _quad(solver, uz * uz + ur * ur + ut * ut)
        ts.append(t)
        es.append(e)
        As.append(_quad(solver, uz * proj[0] + ur * proj[1] + ut * proj[2]) / rho)
        Ats.append(_quad(solver, uz * proj_t[0] + ur * proj_t[1] + ut * proj_t[2]) / rho)
        fx.append(_quad(solver, uz))
        nm.append(math.sqrt(max(e, 0.0)))

    s_prev, N_prev = None, None
    t, i = 0.0, 0
    while t < config.t_end - 1e-9 * dt:
        N = solver.nonlinear(s)
        uz, ur, ut = N[3]
        if i % config.sample_every == 0:
            record(t, (uz, ur, ut))
        if not (np.all(np.isfinite(uz)) and np.all(np.isfinite(ut))):
            _dump(config, solver, s)
            raise DNSError(f"NaN in DNS state at step {i}")
        cfl = dt * float(np.max(np.abs(ur) / dr_local + np.abs(uz) / dz))
        while config.adaptive and cfl > 0.8 * config.cfl_max:
            dt, cfl = dt / 2, cfl / 2
            solver.set_dt(dt)
            s_prev = N_prev = None
        if cfl > config.cfl_max:
            _dump(config, solver, s)
            raise DNSError(f"CFL violation ({cfl:.3g} > {config.cfl_max}) at step {i}")
        s_new = solver.step(s, s_prev, N, N_prev)
        s_prev, N_prev, s = s, N, s_new
        t += dt
        i += 1
    uz, ur, ut, _ = solver.physical(s)
    record(t, (uz, ur, ut))
    series = DNSTimeSeries(np.array(ts), np.array(es), np.array(As), np.array(Ats), np.array(fx),
                           np.array(nm), config.sample_every * config.resolved_dt())
    meta = {"eta": p.eta, "mu": p.mu, "lambda": math.sqrt(p.taylor), "L": L, "a": a,
            "gauge": mode.normalization, "phase": 0.0, "kind": "dns", "t": t, "dt_final": dt}
    final = fl.FieldSnapshot(solver.r.copy(), solver.z.copy(), uz, ur, ut, meta)
    return DNSResult(series, final, s, config)


def _dump(config: DNSConfig, solver: AxisymmetricSolver, s: SpectralState):
    if not config.dump_path:
        return
    uz, ur, ut, _ = solver.physical(s)
    fl.write_snapshot(config.dump_path, fl.FieldSnapshot(solver.r, solver.z, uz, ur, ut,
                                                         {"kind": "dns-dump", "L": solver.L}))


# --- analysis helpers -------------------------------------------------------------------

def measure_rate(series: DNSTimeSeries, start_frac: float = 0.5) -> float:
    """Least-squares slope of log|A| over the tail of the run."""
    t, amp = series.t, series.amplitude
    sel = t >= t[0] + start_frac * (t[-1] - t[0])
    sel &= amp > 0
    if np.count_nonzero(sel) < 3:
        raise DNSError("too few samples to measure a rate")
    return float(np.polyfit(t[sel], np.log(amp[sel]), 1)[0])


def is_saturated(series: DNSTimeSeries, window_frac: float = 0.1, rtol: float = 2e-3) -> bool:
    amp = series.amplitude
    m = max(3, int(len(amp) * window_frac))
    tail = amp[-m:]
    return bool(tail[-1] > 0 and (tail.max() - tail.min()) / tail[-1] < rtol)


def measure_exponent(runs, T_c: float, saturated=None) -> float:
    """Slope of log|A| against log(T - T_c) over saturated supercritical runs."""
    pts = []
    for i, (T, A) in enumerate(runs):
        if saturated is not None and not saturated[i]:
            continue
        if T > T_c and A > 0:
            pts.append((math.log(T - T_c), math.log(abs(A))))
    if len(pts) < 3:
        raise DNSError("insufficient data")
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class TstarBracket:
    low: float
    high: float
    levels: tuple[tuple[float, float], ...]
    bistable: bool | None = None


def bracket_Tstar(template: DNSConfig, T_low: float, T_high: float, n_levels: int = 5,
                  t_hold: float | None = None, collapse_frac: float = 0.1,
                  start_state: SpectralState | None = None, runner=None,
                  check_bistability: bool = True) -> TstarBracket:
    """Hysteresis descent: lower T stepwise from a saturated state until it collapses.

    ``runner(config, state) -> (amplitude, final_state)`` may be injected; the
    default wraps :func:`run`.
    """
    if not T_low < T_high:
        raise ValueError("need T_low < T_high")
    hold = t_hold if t_hold is not None else template.t_end

    def default_runner(cfg, st):
        res = run(cfg, st)
        return float(res.series.amplitude[-1]), res.state

    runner = runner or default_runner
    levels = np.linspace(T_high, T_low, n_levels)
    state = start_state
    amp_ref = None
    history = []
    last_alive = None
    for T in levels:
        cfg = replace(template, params=template.params.with_taylor(float(T)), t_end=hold,
                      init="state" if state is not None else template.init)
        amp, new_state = runner(cfg, state)
        history.append((float(T), amp))
        if amp_ref is None:
            if not amp > 0:
                raise DNSError("starting state is not a saturated branch")
            amp_ref = amp
        if amp < collapse_frac * amp_ref:
            if last_alive is None:
                raise DNSError("starting state is not a saturated branch")
            bist = None
            if check_bistability:
                mid = 0.5 * (last_alive + T)
                seed_cfg = replace(template, params=template.params.with_taylor(float(mid)),
                                   t_end=hold, init="eigen")
                small, _ = runner(seed_cfg, None)
                big, _ = runner(replace(seed_cfg, init="state"), state)
                bist = bool(small < template.init_eps and big > collapse_frac * amp_ref)
            return TstarBracket(float(T), float(last_alive), tuple(history), bist)
        last_alive = float(T)
        state = new_state
    raise DNSError("T* below scan range")


def write_series_csv(path, series: DNSTimeSeries) -> None:
    Path(path).write_text(series.to_csv())
