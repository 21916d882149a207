"""Physical-space reconstruction of Taylor-vortex fields and their topology diagnostics.

Snapshots hold ``u_z, u_r, u_theta`` as arrays of shape ``(nr, nz)`` over one
axial period. The reconstructed family is

    u(z) = A * (cos a(z+z0) D_*h, a sin a(z+z0) h, sin a(z+z0) phi),

which at ``z0 = L/4`` becomes the cosine-family mode ``psi_1`` itself.
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import axifield as af
from .centermanifold import CMCorrection
from .linstab import StabilityMode
from .radial_ops import DiffOperators, RadialGrid, interpolant, locate_max, weighted_inner

MAGIC = "TAYLOR_TRANSIT_SNAPSHOT 1"


class FieldError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FieldSnapshot:
    r_nodes: np.ndarray
    z_nodes: np.ndarray
    u_z: np.ndarray
    u_r: np.ndarray
    u_theta: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def L(self) -> float:
        return float(self.metadata.get("L", len(self.z_nodes) * (self.z_nodes[1] - self.z_nodes[0])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.u_z.shape

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(c)) for c in (self.u_z, self.u_r, self.u_theta)))

    def shifted(self, dz_steps: int) -> "FieldSnapshot":
        """Axial translation by a whole number of z cells."""
        roll = lambda c: np.roll(c, -dz_steps, axis=1)
        meta = dict(self.metadata)
        meta["phase"] = float(meta.get("phase", 0.0)) + dz_steps * (self.z_nodes[1] - self.z_nodes[0])
        return FieldSnapshot(self.r_nodes, self.z_nodes, roll(self.u_z), roll(self.u_r),
                             roll(self.u_theta), meta)


def _from_axifield(f: af.AxiField, nz: int, meta: dict) -> FieldSnapshot:
    z = np.arange(nz) * (f.L / nz)
    U = f.physical_z(z)
    meta = dict(meta)
    meta.setdefault("L", f.L)
    meta.setdefault("a", f.a)
    return FieldSnapshot(f.grid.nodes.copy(), z, U[af.Z].T.copy(), U[af.R].T.copy(), U[af.T].T.copy(), meta)


def _mode_meta(mode: StabilityMode, extra: dict) -> dict:
    meta = {
        "eta": float(mode.grid.nodes[0]) if not mode.grid.planar else None,
        "lambda": mode.lambda0,
        "a": mode.a,
        "L": mode.L,
        "gauge": mode.normalization,
        "coupling": mode.coupling.label,
    }
    meta.update(extra)
    return meta


def reconstruct_eigenfield(mode: StabilityMode, z0: float = 0.0, amplitude: float = 1.0,
                           nz: int = 64, ops: DiffOperators | None = None) -> FieldSnapshot:
    ops = ops or DiffOperators(mode.grid)
    f = af.eigen_fields(mode, ops=ops)["psi_t"].shift(z0).scale(amplitude)
    return _from_axifield(f, nz, _mode_meta(mode, {"phase": z0, "amplitude": amplitude,
                                                   "kind": "eigenfield"}))


def secondary_flow(mode: StabilityMode, corrections: CMCorrection | None, beta1: float, R: float,
                   phase: float = 0.0, nz: int = 64, include_correction: bool = False,
                   ops: DiffOperators | None = None) -> FieldSnapshot:
    """Leading-order bifurcated field ``gamma psi_1`` (plus ``gamma^2 Phi`` on request)."""
    if R >= 0:
        raise FieldError("secondary_flow needs a Type-I coefficient (R < 0)")
    if beta1 < 0:
        raise FieldError("beta1 must be non-negative above onset")
    ops = ops or DiffOperators(mode.grid)
    gamma = math.sqrt(beta1 / abs(R))
    shift = phase - mode.L / 4  # partner family, as in reconstruct_eigenfield
    f = af.eigen_fields(mode, ops=ops)["psi"].shift(shift).scale(gamma)
    order = 1
    if include_correction:
        if corrections is None:
            raise FieldError("quadratic correction requested without CMCorrection")
        f = f + corrections.Phi_assembled.shift(shift).scale(gamma * gamma)
        order = 2
    return _from_axifield(f, nz, _mode_meta(mode, {"phase": phase, "gamma": gamma, "beta1": beta1,
                                                   "R": R, "truncation_order": order,
                                                   "kind": "secondary_flow"}))


def snapshot_divergence(snap: FieldSnapshot, grid: RadialGrid, ops: DiffOperators | None = None) -> float:
    """Max of ``|d(r u_r)/dr + r du_z/dz|`` relative to ``max|u|`` (0 for the zero field)."""
    ops = ops or DiffOperators(grid)
    w = grid.nodes if not grid.planar else np.ones(grid.size)
    nz = snap.u_z.shape[1]
    k = np.fft.fftfreq(nz, d=1.0 / nz) * (2 * math.pi / snap.L)
    dz = np.fft.ifft(np.fft.fft(snap.u_z, axis=1) * (1j * k)[None, :], axis=1).real
    dr = np.column_stack([ops.apply("D", w * snap.u_r[:, j]) for j in range(nz)])
    div = dr + w[:, None] * dz
    scale = snap.max_abs()
    return 0.0 if scale == 0 else float(np.max(np.abs(div)) / scale)


# --- topology -------------------------------------------------------------------

@dataclass(frozen=True)
class TopologyDiagnostics:
    vortex_cells_radial: int
    vortex_cells_axial: int
    cross_channel_flux: float
    in_Htilde: bool
    d_regular: bool | str
    d_values: tuple[float, float, float]
    r0: float
    pattern_class: str

    def as_dict(self) -> dict:
        return {
            "vortex_cells_radial": self.vortex_cells_radial,
            "vortex_cells_axial": self.vortex_cells_axial,
            "cross_channel_flux": self.cross_channel_flux,
            "in_Htilde": self.in_Htilde,
            "d_regular": self.d_regular,
            "d_values": {"r0": self.d_values[0], "eta": self.d_values[1], "outer": self.d_values[2]},
            "r0": self.r0,
            "pattern_class": self.pattern_class,
        }


def _sign_changes(v: np.ndarray, tol: float, periodic: bool = False) -> int:
    s = np.sign(np.where(np.abs(v) > tol, v, 0.0))
    s = s[s != 0]
    if len(s) == 0:
        return 0
    n = int(np.sum(s[1:] != s[:-1]))
    if periodic and len(s) > 1 and s[0] != s[-1]:
        n += 1
    return n


def quintic_second_derivative(f: np.ndarray, x: np.ndarray, x0: float, npts: int = 9) -> float:
    """h'' at ``x0`` from a least-squares quintic through the nearest samples."""
    idx = np.argsort(np.abs(x - x0))[:npts]
    xs = x[idx] - x0
    scale = np.max(np.abs(xs)) or 1.0
    c = np.polynomial.polynomial.polyfit(xs / scale, f[idx], 5)
    return float(2.0 * c[2] / scale**2)


def d_regularity(h: np.ndarray, grid: RadialGrid, ops: DiffOperators | None = None,
                 tol: float = 1e-6, noise_tol: float = 0.05):
    """(r0, h''(r0), h''(eta), h''(1), verdict) with verdict True/False/'unresolved'."""
    ops = ops or DiffOperators(grid)
    r = grid.nodes
    r0, _ = locate_max(h, grid)
    dense = np.linspace(r[0], r[-1], 801)
    H = interpolant(h, grid)(dense)
    pts = (r0, r[0], r[-1])
    vals = tuple(quintic_second_derivative(H, dense, p, npts=11) for p in pts)
    d2 = interpolant(ops.apply("D", ops.apply("D", h)), grid)
    ref = tuple(float(d2(p)) for p in pts)
    ref_scale = max(abs(v) for v in ref) or 1.0
    if any(abs(v - w) > noise_tol * ref_scale for v, w in zip(vals, ref)):
        return r0, vals, "unresolved"
    return r0, vals, bool(all(abs(v) > tol * ref_scale for v in vals))


def diagnose_topology(snapshot: FieldSnapshot, mode: StabilityMode, tol: float = 1e-8,
                      ops: DiffOperators | None = None) -> TopologyDiagnostics:
    grid = mode.grid
    if len(snapshot.r_nodes) != grid.size or not np.allclose(snapshot.r_nodes, grid.nodes):
        raise FieldError("snapshot radial nodes do not match the mode grid")
    ops = ops or DiffOperators(grid)
    w = grid.quad_weights
    L = snapshot.L
    nz = snapshot.u_z.shape[1]
    flux = float(np.sum(w * snapshot.u_z.mean(axis=1)) * L)
    energy = sum(float(np.sum(w * (c**2).mean(axis=1)) * L) for c in (snapshot.u_z, snapshot.u_r, snapshot.u_theta))
    unorm = math.sqrt(energy)
    measure = L * float(np.sum(w))
    in_ht = abs(flux) <= tol * unorm * math.sqrt(measure)

    hmax = np.max(np.abs(mode.h))
    radial = 1 + _sign_changes(mode.h[1:-1], 1e-10 * hmax)
    r0, dvals, dreg = d_regularity(mode.h, grid, ops)
    i0 = int(np.argmin(np.abs(grid.nodes - r0)))
    ur_line = snapshot.u_r[i0]
    axial = _sign_changes(ur_line, 1e-10 * max(snapshot.max_abs(), 1e-300), periodic=True) if nz > 1 else 0

    if unorm == 0:
        cls = "unresolved"
    elif radial >= 2:
        cls = "k_cell_stack"
    elif in_ht:
        cls = "fig_9_13"
    else:
        cls = "fig_9_12_a" if flux > 0 else "fig_9_12_b"
    return TopologyDiagnostics(radial, axial, flux, bool(in_ht), dreg, dvals, r0, cls)


# --- e_k decomposition -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EkDecomposition:
    rho: np.ndarray
    modes: np.ndarray  # (n_modes, n) profiles
    alpha: np.ndarray
    k0: int | None
    leading_sign: int
    residual: float
    flags: tuple[str, ...] = ()

    def decay(self, t: float) -> np.ndarray:
        return self.alpha * np.exp(-self.rho * t)

    def as_dict(self) -> dict:
        return {
            "rho": self.rho.tolist(),
            "alpha": self.alpha.tolist(),
            "k0": self.k0,
            "leading_sign": self.leading_sign,
            "residual": self.residual,
            "flags": list(self.flags),
        }


def ek_basis(grid: RadialGrid, ops: DiffOperators | None = None, n_modes: int = 8):
    """Eigenpairs of ``D_* D e = -rho e`` with ``e = 0`` at both walls, r-orthonormal."""
    ops = ops or DiffOperators(grid)
    A = ops.DstarD[1:-1, 1:-1]
    vals, vecs = np.linalg.eig(A)
    order = np.argsort(-vals.real)
    rho = -vals.real[order][:n_modes]
    modes = np.zeros((len(rho), grid.size))
    for j, k in enumerate(order[:n_modes]):
        e = np.zeros(grid.size)
        e[1:-1] = vecs[:, k].real
        e /= math.sqrt(weighted_inner(e, e, grid))
        # sign gauge: positive slope at the inner wall
        if ops.apply("D", e)[0] < 0:
            e = -e
        modes[j] = e
    return rho, modes


def ek_decompose(profile: np.ndarray, grid: RadialGrid, n_modes: int = 8,
                 ops: DiffOperators | None = None, tol: float = 1e-8) -> EkDecomposition:
    profile = np.asarray(profile, dtype=float)
    flags = []
    scale = np.max(np.abs(profile))
    if scale > 0 and max(abs(profile[0]), abs(profile[-1])) > tol * scale:
        warnings.warn("profile does not vanish at the walls; projecting anyway", RuntimeWarning)
        flags.append("nonzero wall values")
    rho, modes = ek_basis(grid, ops, n_modes)
    alpha = np.array([weighted_inner(profile, e, grid) for e in modes])
    norm = math.sqrt(max(weighted_inner(profile, profile, grid), 0.0))
    rec = alpha @ modes
    resid = math.sqrt(max(weighted_inner(profile - rec, profile - rec, grid), 0.0))
    big = np.nonzero(np.abs(alpha) > tol * max(norm, 1e-300))[0] if norm > 0 else []
    if len(big) == 0:
        k0, sign = None, 0
        flags.append("in H~")
    else:
        k0 = int(big[0]) + 1
        sign = int(np.sign(alpha[big[0]]))
    return EkDecomposition(rho, modes, alpha, k0, sign, resid, tuple(flags))


# --- file formats ----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_snapshot(path, snap: FieldSnapshot) -> None:
    nr, nz = snap.u_z.shape
    header = [MAGIC, f"nr={nr}", f"nz={nz}", "order=column-major", "dtype=float64-le",
              "blocks=u_z,u_r,u_theta"]
    for k in sorted(snap.metadata):
        v = snap.metadata[k]
        if v is None:
            continue
        header.append(f"{k}={_fmt(v)}")
    header.append("r_nodes=" + ",".join(repr(float(x)) for x in snap.r_nodes))
    header.append("z_nodes=" + ",".join(repr(float(x)) for x in snap.z_nodes))
    header.append("END_HEADER")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        for c in (snap.u_z, snap.u_r, snap.u_theta):
            fh.write(np.asarray(c, dtype="<f8").tobytes(order="F"))


def _parse_value(s: str):
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    if s in ("True", "False"):
        return s == "True"
    return s


def read_snapshot(path) -> FieldSnapshot:
    data = Path(path).read_bytes()
    marker = b"END_HEADER\n"
    cut = data.find(marker)
    if not data.startswith(MAGIC.encode()) or cut < 0:
        raise FieldError(f"{path}: not a snapshot file")
    meta = {}
    for line in data[:cut].decode("ascii").splitlines()[1:]:
        k, _, v = line.partition("=")
        meta[k] = v
    nr, nz = int(meta.pop("nr")), int(meta.pop("nz"))
    r = np.array([float(x) for x in meta.pop("r_nodes").split(",")])
    z = np.array([float(x) for x in meta.pop("z_nodes").split(",")])
    for k in ("order", "dtype", "blocks"):
        meta.pop(k, None)
    body = np.frombuffer(data[cut + len(marker):], dtype="<f8")
    if body.size != 3 * nr * nz:
        raise FieldError(f"{path}: expected {3 * nr * nz} values, found {body.size}")
    blocks = [body[i * nr * nz:(i + 1) * nr * nz].reshape((nr, nz), order="F").copy() for i in range(3)]
    return FieldSnapshot(r, z, *blocks, {k: _parse_value(v) for k, v in meta.items()})


def export_csv(path_or_buf, snap: FieldSnapshot) -> None:
    own = isinstance(path_or_buf, (str, Path))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        fh.write("r,z,u_z,u_r,u_theta\n")
        for i, r in enumerate(snap.r_nodes):
            for j, z in enumerate(snap.z_nodes):
                vals = (r, z, snap.u_z[i, j], snap.u_r[i, j], snap.u_theta[i, j])
                fh.write(",".join(repr(float(v)) for v in vals) + "\n")
    finally:
        if own:
            fh.close()


def csv_text(snap: FieldSnapshot) -> str:
    buf = io.StringIO()
    export_csv(buf, snap)
    return buf.getvalue()
