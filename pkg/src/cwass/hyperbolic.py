"""Poincare-disk geometry.

Points are complex numbers in the open unit disk. The reference metric is
``(1 - |z|^2)^-2 |dz|^2``, so the distance from the origin to a point at
Euclidean radius ``r`` is ``atanh(r)`` and a geodesic disk of radius ``R``
centred at 0 is the Euclidean disk of radius ``tanh(R)``.

Disk-preserving Mobius maps are stored in the canonical form
``m(z) = exp(i theta) (z - a) / (1 - conj(a) z)`` with ``|a| < 1`` and
``theta`` in ``[0, 2 pi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import ConvergenceError, InvalidParameterError

TWO_PI = 2.0 * math.pi
BOUNDARY_MARGIN = 1e-9


def _as_complex(z) -> complex:
    if isinstance(z, DiskPoint):
        return z.z
    return complex(z)


@dataclass(frozen=True)
class DiskPoint:
    """A point strictly inside the unit disk."""

    re: float
    im: float

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise InvalidParameterError("disk point must be finite")
        if math.hypot(self.re, self.im) >= 1.0 - BOUNDARY_MARGIN:
            raise InvalidParameterError(
                f"point {complex(self.re, self.im)} is not inside the unit disk "
                f"(margin {BOUNDARY_MARGIN}); use BoundaryPoint for the circle"
            )

    @classmethod
    def from_complex(cls, z) -> "DiskPoint":
        z = _as_complex(z)
        return cls(z.real, z.imag)

    @property
    def z(self) -> complex:
        return complex(self.re, self.im)

    def __complex__(self):
        return self.z


@dataclass(frozen=True)
class BoundaryPoint:
    """The point ``exp(i angle)`` on the unit circle."""

    angle: float

    def __post_init__(self):
        object.__setattr__(self, "angle", float(self.angle) % TWO_PI)

    @property
    def z(self) -> complex:
        return complex(math.cos(self.angle), math.sin(self.angle))


@dataclass(frozen=True)
class MobiusTransform:
    """Disk automorphism ``z -> exp(i theta) (z - a) / (1 - conj(a) z)``."""

    a: complex = 0j
    theta: float = 0.0

    def __post_init__(self):
        a = complex(self.a.z if isinstance(self.a, DiskPoint) else self.a)
        if not abs(a) < 1.0:
            raise InvalidParameterError(f"|a| must be < 1, got {abs(a)}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)

    @classmethod
    def identity(cls) -> "MobiusTransform":
        return cls(0j, 0.0)

    @classmethod
    def from_params(cls, re_a: float, im_a: float, theta: float) -> "MobiusTransform":
        return cls(complex(re_a, im_a), theta)

    @property
    def rotation(self) -> complex:
        return complex(math.cos(self.theta), math.sin(self.theta))

    def __call__(self, z):
        """Apply to a complex scalar or array (no DiskPoint wrapping)."""
        a = self.a
        return self.rotation * (z - a) / (1.0 - np.conj(a) * z)

    def derivative(self, z):
        a = self.a
        return self.rotation * (1.0 - abs(a) ** 2) / (1.0 - np.conj(a) * z) ** 2

    def inverse(self) -> "MobiusTransform":
        return MobiusTransform(-self.a * self.rotation, -self.theta)

    def compose(self, other: "MobiusTransform") -> "MobiusTransform":
        """Return ``self o other``."""
        return mobius_compose(self, other)

    def matrix(self) -> np.ndarray:
        e = self.rotation
        return np.array([[e, -e * self.a], [-np.conj(self.a), 1.0]], dtype=complex)

    def params(self) -> tuple[float, float, float]:
        return (self.a.real, self.a.imag, self.theta)


def mobius_apply(m: MobiusTransform, z):
    """Apply ``m`` to a DiskPoint (returns a DiskPoint) or to complex values."""
    if isinstance(z, DiskPoint):
        return DiskPoint.from_complex(m(z.z))
    return m(z)


def mobius_inverse(m: MobiusTransform) -> MobiusTransform:
    return m.inverse()


def mobius_compose(m1: MobiusTransform, m2: MobiusTransform) -> MobiusTransform:
    """Composition ``m1 o m2`` renormalised to the canonical ``(a, theta)`` form."""
    p = m1.matrix() @ m2.matrix()
    A, B, D = p[0, 0], p[0, 1], p[1, 1]
    a = -B / A
    theta = float(np.angle(A / D))
    return MobiusTransform(complex(a), theta)


def hyperbolic_distance(z, w):
    """Distance for the metric ``(1-|z|^2)^-2 |dz|^2``; accepts arrays."""
    if isinstance(z, DiskPoint):
        z = z.z
    if isinstance(w, DiskPoint):
        w = w.z
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    ratio = np.abs(z - w) / np.abs(1.0 - np.conj(z) * w)
    out = np.arctanh(np.minimum(ratio, 1.0 - 1e-16))
    return float(out) if out.ndim == 0 else out


def to_origin(z0: complex) -> MobiusTransform:
    """The map ``z -> (z - z0) / (1 - conj(z0) z)`` sending ``z0`` to 0."""
    return MobiusTransform(complex(z0), 0.0)


def from_origin(z0: complex, u):
    """Inverse of :func:`to_origin`, ``u -> (u + z0) / (1 + conj(z0) u)``."""
    return (u + z0) / (1.0 + np.conj(z0) * u)


@dataclass(frozen=True)
class GeodesicDisk:
    """Closed hyperbolic disk ``{z : d_H(z, center) <= radius_R}``."""

    center: DiskPoint
    radius_R: float

    @property
    def euclidean_radius_centered(self) -> float:
        """Euclidean radius of the disk once its centre is moved to 0."""
        return math.tanh(self.radius_R)

    def contains(self, z):
        c = self.center.z
        u = (np.asarray(z) - c) / (1.0 - np.conj(c) * np.asarray(z))
        return np.abs(u) <= self.euclidean_radius_centered

    def euclidean_circle(self) -> tuple[complex, float]:
        """Euclidean centre and radius of the disk as a subset of the plane."""
        c = self.center.z
        r = self.euclidean_radius_centered
        # image of the circle |u| = r under u -> (u + c) / (1 + conj(c) u)
        denom = 1.0 - r * r * abs(c) ** 2
        return c * (1.0 - r * r) / denom, r * (1.0 - abs(c) ** 2) / denom

    def volume(self) -> float:
        return math.pi * math.sinh(self.radius_R) ** 2


def geodesic_disk(center, R: float) -> GeodesicDisk:
    if not R > 0:
        raise InvalidParameterError(f"radius must be positive, got {R}")
    if not isinstance(center, DiskPoint):
        center = DiskPoint.from_complex(center)
    return GeodesicDisk(center, float(R))


def interpolating_mobius(z0, w0, sigma) -> MobiusTransform:
    """The member ``m_{z0,w0,sigma}`` of the circle of maps sending ``z0`` to ``w0``.

    Every such map equals ``from_origin(w0) o (u -> sigma u) o to_origin(z0)``.
    """
    z0 = _as_complex(z0)
    w0 = _as_complex(w0)
    sigma = complex(sigma)
    if abs(abs(sigma) - 1.0) > 1e-9:
        raise InvalidParameterError(f"sigma must be unimodular, got |sigma|={abs(sigma)}")
    sigma /= abs(sigma)
    sb = sigma.conjugate()
    a = (z0 - w0 * sb) / (1.0 - z0.conjugate() * w0 * sb)
    tau = sigma * (1.0 - z0.conjugate() * w0 * sb) / (1.0 - z0 * w0.conjugate() * sigma)
    return MobiusTransform(a, math.atan2(tau.imag, tau.real))


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor rule on the centred geodesic disk of radius ``R``.

    Gauss-Legendre in the geodesic radius ``t`` (``r = tanh t``) and the
    periodic trapezoid rule in angle. ``weights[k]`` already includes the
    area element ``sinh t cosh t`` and the angular step, so that
    ``sum_k weights[k] * sum_l f(radii[k] * exp(i angles[l]))`` integrates
    ``f dvol_H``.
    """

    R: float
    radii: np.ndarray
    angles: np.ndarray
    weights: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        """Complex nodes, shape ``(n_radial, n_angular)``."""
        return self.radii[:, None] * np.exp(1j * self.angles)[None, :]

    def integrate_values(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * np.sum(values, axis=-1)))


@lru_cache(maxsize=64)
def quadrature_rule(R: float, n_radial: int = 24, n_angular: int = 48) -> QuadratureRule:
    if not R > 0:
        raise InvalidParameterError(f"radius must be positive, got {R}")
    if n_radial < 1 or n_angular < 1:
        raise InvalidParameterError("node counts must be positive")
    x, w = np.polynomial.legendre.leggauss(n_radial)
    t = 0.5 * R * (x + 1.0)
    wt = 0.5 * R * w * np.sinh(t) * np.cosh(t) * (TWO_PI / n_angular)
    angles = TWO_PI * (np.arange(n_angular) + 0.5) / n_angular
    rule = QuadratureRule(float(R), np.tanh(t), angles, wt)
    for arr in (rule.radii, rule.angles, rule.weights):
        arr.setflags(write=False)
    return rule


def hyperbolic_quadrature(
    disk: GeodesicDisk,
    f: Callable[[np.ndarray], np.ndarray],
    n_radial: int = 24,
    n_angular: int = 48,
) -> float:
    """Integrate ``f`` against ``dvol_H`` over a geodesic disk.

    ``f`` receives a complex array of points and must return an array of the
    same shape. The disk is moved to the origin by an isometry, which leaves
    the volume element unchanged.
    """
    rule = quadrature_rule(disk.radius_R, n_radial, n_angular)
    pts = from_origin(disk.center.z, rule.nodes)
    values = np.asarray(f(pts), dtype=float)
    return rule.integrate_values(values)


def geodesic_volume(R: float) -> float:
    """``Vol_H`` of a geodesic disk of radius ``R``: ``pi sinh(R)^2``."""
    return math.pi * math.sinh(R) ** 2


def hyperbolic_median(z: np.ndarray, w: np.ndarray, tol: float = 1e-12,
                      max_iter: int = 1000) -> complex:
    """Point minimising ``sum_i w_i d_H(c, z_i)`` (Riemannian Weiszfeld iteration)."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=float)
    c = 0j
    for _ in range(max_iter):
        u = (z - c) / (1.0 - np.conj(c) * z)
        r = np.abs(u)
        keep = r > 1e-15
        if not np.any(keep):
            return c
        d = np.arctanh(np.minimum(r[keep], 1.0 - 1e-16))
        num = np.sum(w[keep] * u[keep] / r[keep])
        den = np.sum(w[keep] / d)
        x = num / den
        nx = abs(x)
        if nx < tol:
            return c
        step = math.tanh(nx) * x / nx
        c = (step + c) / (1.0 + np.conj(c) * step)
    raise ConvergenceError(f"hyperbolic centre did not converge in {max_iter} iterations")
