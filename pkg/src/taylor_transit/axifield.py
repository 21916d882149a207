"""Axisymmetric, z-periodic vector fields stored as finite Fourier sums.

A field has components ``(z, r, theta)``; each component is an array of
complex coefficients ``c[k + K, :]`` multiplying ``exp(i k a z)`` for
``k = -K..K``, sampled on the radial nodes. Products become convolutions,
``d/dz`` becomes multiplication by ``i k a`` and the period integral of a
product is ``L * sum_k f_k g_{-k}``. This keeps every center-manifold inner
product exact in z.

``physical_z`` and :func:`trilinear_numeric` evaluate the same quantities by
sampling on a uniform z grid; they exist as an independent check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .radial_ops import DiffOperators, RadialGrid

Z, R, T = 0, 1, 2


@dataclass(frozen=True, eq=False)
class AxiField:
    a: float
    grid: RadialGrid
    coef: np.ndarray  # (3, 2K+1, n) complex

    @property
    def K(self) -> int:
        return (self.coef.shape[1] - 1) // 2

    @property
    def L(self) -> float:
        return 2.0 * math.pi / self.a

    @classmethod
    def zeros(cls, a: float, grid: RadialGrid, K: int) -> "AxiField":
        return cls(a, grid, np.zeros((3, 2 * K + 1, grid.size), dtype=complex))

    def with_K(self, K: int) -> "AxiField":
        if K == self.K:
            return self
        out = AxiField.zeros(self.a, self.grid, K)
        m = min(K, self.K)
        out.coef[:, K - m:K + m + 1] = self.coef[:, self.K - m:self.K + m + 1]
        return out

    def __add__(self, other: "AxiField") -> "AxiField":
        K = max(self.K, other.K)
        return AxiField(self.a, self.grid, self.with_K(K).coef + other.with_K(K).coef)

    def __neg__(self) -> "AxiField":
        return AxiField(self.a, self.grid, -self.coef)

    def __sub__(self, other: "AxiField") -> "AxiField":
        return self + (-other)

    def scale(self, c: float) -> "AxiField":
        return AxiField(self.a, self.grid, c * self.coef)

    def shift(self, dz: float) -> "AxiField":
        """The field ``u(z + dz)``."""
        k = np.arange(-self.K, self.K + 1)
        ph = np.exp(1j * k * self.a * dz)[None, :, None]
        return AxiField(self.a, self.grid, self.coef * ph)

    def harmonic(self, k: int) -> "AxiField":
        out = AxiField.zeros(self.a, self.grid, self.K)
        for kk in {k, -k}:
            if abs(kk) <= self.K:
                out.coef[:, kk + self.K] = self.coef[:, kk + self.K]
        return out

    def physical_z(self, z: np.ndarray) -> np.ndarray:
        """Real samples, shape (3, len(z), n)."""
        k = np.arange(-self.K, self.K + 1)
        e = np.exp(1j * np.outer(z, k) * self.a)
        return np.einsum("zk,ckn->czn", e, self.coef).real

    def norm(self) -> float:
        return math.sqrt(max(inner(self, self), 0.0))


def add_trig(f: AxiField, comp: int, kind: str, k: int, profile) -> None:
    """In place: add ``profile(r) * cos(k a z)`` or ``sin(k a z)`` to a component."""
    K = f.K
    p = np.asarray(profile, dtype=float)
    if k == 0:
        if kind == "cos":
            f.coef[comp, K] += p
        return
    if kind == "cos":
        f.coef[comp, K + k] += 0.5 * p
        f.coef[comp, K - k] += 0.5 * p
    elif kind == "sin":
        f.coef[comp, K + k] += -0.5j * p
        f.coef[comp, K - k] += 0.5j * p
    else:
        raise ValueError(kind)


def _geom(grid: RadialGrid):
    r = grid.nodes
    if grid.planar:
        return np.zeros_like(r), np.ones_like(r)
    return 1.0 / r, r


def _ddr(c: np.ndarray, ops: DiffOperators) -> np.ndarray:
    flat = c.reshape(-1, c.shape[-1])
    out = np.empty_like(flat)
    for i, row in enumerate(flat):
        if np.any(row):
            out[i] = ops.apply("D", row.real) + 1j * ops.apply("D", row.imag)
        else:
            out[i] = 0.0
    return out.reshape(c.shape)


def _ddz(c: np.ndarray, a: float) -> np.ndarray:
    K = (c.shape[-2] - 1) // 2
    k = np.arange(-K, K + 1)
    return c * (1j * k * a)[:, None]


def _conv(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Coefficient arrays (2K1+1, n) x (2K2+1, n) -> (2(K1+K2)+1, n)."""
    n1, n2 = f.shape[0], g.shape[0]
    out = np.zeros((n1 + n2 - 1, f.shape[1]), dtype=complex)
    for i in range(n1):
        if np.any(f[i]):
            out[i:i + n2] += f[i] * g
    return out


def G(u: AxiField, v: AxiField, ops: DiffOperators) -> AxiField:
    """Quadratic advection operator; only the meridional part of ``u`` advects."""
    inv_r, _ = _geom(u.grid)
    vr = _ddr(v.coef, ops)
    vz = _ddz(v.coef, v.a)

    def adv(c):
        return _conv(u.coef[R], vr[c]) + _conv(u.coef[Z], vz[c])

    out = np.empty((3, u.coef.shape[1] + v.coef.shape[1] - 1, u.grid.size), dtype=complex)
    out[Z] = -adv(Z)
    out[R] = -(adv(R) - _conv(u.coef[T], v.coef[T]) * inv_r)
    out[T] = -(adv(T) + _conv(u.coef[T], v.coef[R]) * inv_r)
    return AxiField(u.a, u.grid, out)


def inner(u: AxiField, w: AxiField) -> float:
    """``(u, w)_H = int_0^L int r u.w dr dz`` (unit weight on planar grids)."""
    K = max(u.K, w.K)
    uc, wc = u.with_K(K).coef, w.with_K(K).coef
    s = np.sum(uc * wc[:, ::-1, :], axis=(0, 1))
    return float(u.L * np.sum(u.grid.plain_weights * _geom(u.grid)[1] * s.real))


def trilinear(u: AxiField, v: AxiField, w: AxiField, ops: DiffOperators) -> float:
    return inner(G(u, v, ops), w)


def divergence(u: AxiField, ops: DiffOperators) -> AxiField:
    """``d(r u_r)/dr + r du_z/dz`` (planar: ``du_r/dx + du_z/dz``); scalar stored in slot z."""
    inv_r, w = _geom(u.grid)
    out = AxiField.zeros(u.a, u.grid, u.K)
    out.coef[Z] = _ddr(w * u.coef[R], ops) + w * _ddz(u.coef[Z], u.a)
    return out


def stream_field(a: float, grid: RadialGrid, ops: DiffOperators, psi: np.ndarray,
                 swirl: np.ndarray | None = None) -> AxiField:
    """Divergence-free field from stream-function coefficients ``psi`` (2K+1, n).

    ``u_r = dpsi/dz`` and ``u_z = -D_* psi`` (``-D psi`` on planar grids).
    """
    inv_r, _ = _geom(grid)
    f = AxiField(a, grid, np.zeros((3,) + psi.shape, dtype=complex))
    f.coef[R] = _ddz(psi, a)
    f.coef[Z] = -(_ddr(psi, ops) + psi * inv_r)
    if swirl is not None:
        f.coef[T] = swirl
    return f


def mode_field(h, phi_field, a: float, grid: RadialGrid, ops: DiffOperators,
               harmonic: int = 1, K: int | None = None) -> AxiField:
    """``(-sin(kaz) D_*h, k a cos(kaz) h, cos(kaz) phi)`` for harmonic k."""
    k = harmonic
    inv_r, _ = _geom(grid)
    f = AxiField.zeros(a, grid, K if K is not None else k)
    add_trig(f, Z, "sin", k, -(ops.apply("D", h) + inv_r * h))
    add_trig(f, R, "cos", k, k * a * np.asarray(h))
    add_trig(f, T, "cos", k, phi_field)
    return f


def eigen_fields(mode, adjoint=None, ops: DiffOperators | None = None):
    """``psi_1``, its quarter-period partner and (optionally) the adjoint pair.

    The partner is ``psi_1(z - L/4) = (cos az D_*h, a sin az h, sin az phi)``.
    """
    ops = ops or DiffOperators(mode.grid)
    psi = mode_field(mode.h, mode.phi_field, mode.a, mode.grid, ops)
    out = {"psi": psi, "psi_t": psi.shift(-mode.L / 4)}
    if adjoint is not None:
        ps = mode_field(adjoint.hstar, adjoint.phi_field, mode.a, mode.grid, ops)
        out["adj"] = ps
        out["adj_t"] = ps.shift(-mode.L / 4)
    return out


# --- numerical-z oracle -------------------------------------------------------

def _fft_dz(samples: np.ndarray, a: float) -> np.ndarray:
    nz = samples.shape[-2]
    k = np.fft.fftfreq(nz, d=1.0 / nz)
    spec = np.fft.fft(samples, axis=-2)
    return np.fft.ifft(spec * (1j * k * a)[:, None], axis=-2).real


def trilinear_numeric(u: AxiField, v: AxiField, w: AxiField, ops: DiffOperators,
                      nz: int = 64) -> float:
    """(G(u, v), w)_H by physical-space products and the periodic trapezoid rule."""
    z = np.arange(nz) * (u.L / nz)
    U, V, W = u.physical_z(z), v.physical_z(z), w.physical_z(z)
    inv_r, wt = _geom(u.grid)
    Vr = np.stack([np.array([ops.apply("D", row) for row in V[c]]) for c in range(3)])
    Vz = np.stack([_fft_dz(V[c], u.a) for c in range(3)])
    adv = U[R][None] * Vr + U[Z][None] * Vz
    g = np.empty_like(U)
    g[Z] = -adv[Z]
    g[R] = -(adv[R] - U[T] * V[T] * inv_r)
    g[T] = -(adv[T] + U[T] * V[R] * inv_r)
    integrand = np.sum(g * W, axis=0).mean(axis=0) * u.L
    return float(np.sum(u.grid.plain_weights * wt * integrand))
