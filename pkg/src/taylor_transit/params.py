"""Nondimensional parameters, the Couette base profile and Rayleigh pre-screening.

Two length scales are in use across the toolkit and they are never mixed:

* ``h = r2`` for the full cylindrical problem (``NondimParams.taylor``),
* ``h = r2 - r1`` for the narrow-gap systems (``narrowgap_taylor``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field


class ParameterError(ValueError):
    """Raised when a geometry or parameter set violates its invariants."""


@dataclass(frozen=True)
class CylinderGeometry:
    r1: float
    r2: float
    omega1: float
    omega2: float
    nu: float

    def __post_init__(self):
        if not (self.r2 > self.r1 > 0):
            raise ParameterError(f"need r2 > r1 > 0, got r1={self.r1}, r2={self.r2}")
        if not self.nu > 0:
            raise ParameterError(f"viscosity must be positive, got {self.nu}")


@dataclass(frozen=True)
class NondimParams:
    """Ratios and derived coefficients for the rotating annulus.

    ``taylor`` may be ``None`` when only the geometry ratios are known (the
    stability solvers take the Taylor number as the unknown).
    """

    eta: float
    mu: float
    taylor: float | None = None
    length_scale: str = "r2"
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not (0.0 < self.eta < 1.0):
            raise ParameterError(f"radius ratio must lie in (0, 1), got {self.eta}")
        if self.mu == 1.0:
            raise ParameterError("degenerate rotation ratio: mu = 1 leaves kappa undefined")
        if self.taylor is not None and self.taylor < 0:
            raise ParameterError("Taylor number must be non-negative")

    @property
    def kappa(self) -> float:
        return (1.0 - self.mu / self.eta**2) / (1.0 - self.mu)

    @property
    def alpha(self) -> float:
        return (self.eta**2 - self.mu) / (1.0 - self.eta**2)

    @property
    def lam(self) -> float | None:
        return None if self.taylor is None else math.sqrt(self.taylor)

    @property
    def rayleigh_stable(self) -> bool:
        return rayleigh_stable(self)

    def with_taylor(self, taylor: float) -> "NondimParams":
        return NondimParams(self.eta, self.mu, taylor, self.length_scale, self.flags)

    def with_lambda(self, lam: float) -> "NondimParams":
        return self.with_taylor(lam * lam)

    def as_dict(self) -> dict:
        return {
            "eta": self.eta,
            "mu": self.mu,
            "kappa": self.kappa,
            "alpha": self.alpha,
            "taylor": self.taylor,
            "lambda": self.lam,
            "length_scale": self.length_scale,
            "flags": list(self.flags),
        }


def make_params(eta: float, mu: float, taylor: float | None = None) -> NondimParams:
    """Build parameters from the ratios directly, stamping regime flags."""
    flags = []
    probe = NondimParams(eta, mu, taylor)
    if rayleigh_stable(probe):
        flags.append("Rayleigh-stable regime")
    if mu < 0:
        flags.append("PES unverified")
    return NondimParams(eta, mu, taylor, "r2", tuple(flags))


def nondimensionalize(geom: CylinderGeometry) -> NondimParams:
    """Ratios and the Taylor number with the outer radius as length scale."""
    if geom.omega1 == 0:
        raise ParameterError("inner cylinder must rotate (omega1 != 0)")
    eta = geom.r1 / geom.r2
    mu = geom.omega2 / geom.omega1
    if mu == 1.0:
        raise ParameterError("degenerate rotation ratio: mu = 1 leaves kappa undefined")
    taylor = (
        4.0 * geom.r2**4 * geom.omega1**2 * (1.0 - mu) ** 2 * eta**4
        / (geom.nu**2 * (1.0 - eta**2) ** 2)
    )
    return make_params(eta, mu, taylor)


def generic_taylor(omega1: float, h: float, nu: float) -> float:
    """Taylor number ``4 h^4 Omega1^2 / nu^2`` for an arbitrary length scale."""
    return 4.0 * h**4 * omega1**2 / nu**2


def narrowgap_taylor(lam1: float, alpha: float) -> float:
    """Critical narrow-gap Taylor number from the first gap eigenvalue."""
    if alpha <= 0:
        raise ParameterError("alpha must be positive (mu < eta^2)")
    return lam1**2 / alpha


@dataclass(frozen=True)
class CouetteProfile:
    a_coef: float
    b_coef: float

    def __call__(self, r):
        return self.a_coef * r + self.b_coef / r

    def angular_velocity(self, r):
        return self.a_coef + self.b_coef / r**2


def couette_profile(geom: CylinderGeometry) -> CouetteProfile:
    eta = geom.r1 / geom.r2
    mu = geom.omega2 / geom.omega1
    a = -geom.omega1 * eta**2 * (1.0 - mu / eta**2) / (1.0 - eta**2)
    b = geom.omega1 * geom.r1**2 * (1.0 - mu) / (1.0 - eta**2)
    return CouetteProfile(a, b)


def rayleigh_stable(params: NondimParams) -> bool:
    # mu == eta^2 is kept on the unstable-candidate side on purpose
    return params.mu > params.eta**2


def narrowgap_path_eta(mu: float, delta: float = 1.0) -> float:
    """Radius ratio along the path ``r1 = (2 + delta)/(1 - mu)`` in gap units."""
    if not (0 <= mu < 1):
        raise ParameterError("path defined for 0 <= mu < 1")
    r1 = (2.0 + delta) / (1.0 - mu)
    return r1 / (r1 + 1.0)
