"""Mobius-invariant local dissimilarity between two conformal densities.

For sample points ``z0`` of ``mu`` and ``w0`` of ``nu``::

    Phi(sigma) = int_{Omega(z0, R)} |mu(z) - nu(m_sigma(z))| dvol_H(z)

where ``m_sigma`` runs over the circle of disk automorphisms sending ``z0`` to
``w0``. The local cost is the minimum of ``Phi`` over ``sigma``.

Moving ``z0`` to the origin turns the integral into a fixed polar quadrature
of ``mu(T_z0^-1(u)) - nu(T_w0^-1(sigma u))``, so ``sigma`` simply rotates the
nodes of the second density. A coarse grid of rotations is evaluated by
index shifts on a finer angular grid of the second density; golden-section
search then refines the best cell, interpolating that grid linearly in angle.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .density import ConformalDensity
from .errors import InvalidInputError, InvalidParameterError
from .hyperbolic import DiskPoint, from_origin, geodesic_volume, quadrature_rule


# angular resolution of the rotated column profiles used during refinement
FINE_ANGULAR = 1536
# number of grid cells refined by golden-section search
N_REFINE = 4


@dataclass(frozen=True)
class CostConfig:
    """Parameters of the local cost.

    ``tol`` is the quadrature-scale tolerance used by callers when comparing
    costs that agree mathematically (symmetry, invariance, reflexivity).
    """

    R: float = 1.0
    sigma_grid: int = 32
    refine_tol: float = 1e-4
    quad_radial: int = 24
    quad_angular: int = 256
    tol: float = 1e-3

    def __post_init__(self):
        if not self.R > 0:
            raise InvalidParameterError(f"R must be positive, got {self.R}")
        if int(self.sigma_grid) != self.sigma_grid or self.sigma_grid < 8:
            raise InvalidParameterError("sigma_grid must be an integer >= 8")
        if not 0 < self.refine_tol < 2.0 * math.pi / self.sigma_grid:
            raise InvalidParameterError("refine_tol must lie in (0, 2 pi / sigma_grid)")
        if self.quad_radial < 1 or self.quad_angular < 1:
            raise InvalidParameterError("quadrature node counts must be positive")
        if not self.tol > 0:
            raise InvalidParameterError("tol must be positive")

    @property
    def volume(self) -> float:
        return geodesic_volume(self.R)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "CostConfig":
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        return cls(**known)


@dataclass(frozen=True, eq=False)
class CostMatrix:
    values: np.ndarray
    row_points: np.ndarray
    col_points: np.ndarray
    config: CostConfig
    argmin_sigma: np.ndarray

    @property
    def shape(self):
        return self.values.shape

    def to_json(self) -> str:
        doc = {
            "config": self.config.to_dict(),
            "row_points": [[float(p.real), float(p.imag)] for p in self.row_points],
            "col_points": [[float(p.real), float(p.imag)] for p in self.col_points],
            "values": self.values.tolist(),
            "argmin_sigma": [[[float(s.real), float(s.imag)] for s in row]
                             for row in self.argmin_sigma],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "CostMatrix":
        doc = json.loads(text)
        pts = lambda key: np.array([complex(a, b) for a, b in doc[key]], dtype=complex)  # noqa: E731
        sig = np.array([[complex(a, b) for a, b in row] for row in doc["argmin_sigma"]],
                       dtype=complex)
        return cls(np.array(doc["values"], dtype=float), pts("row_points"), pts("col_points"),
                   CostConfig.from_dict(doc["config"]), sig)

    def to_csv(self) -> str:
        return "\n".join(",".join(repr(float(v)) for v in row) for row in self.values) + "\n"


def _points(pts) -> np.ndarray:
    out = np.array([p.z if isinstance(p, DiskPoint) else complex(p) for p in np.ravel(pts)],
                   dtype=complex)
    if np.any(np.abs(out) >= 1.0):
        raise InvalidInputError("cost points must lie strictly inside the disk")
    return out


def default_workers() -> int:
    env = os.environ.get("CWASS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def fine_angular_count(n_angular: int, sigma_grid: int, target: int = FINE_ANGULAR) -> int:
    """Smallest common multiple of both counts that is at least ``target``."""
    base = n_angular * sigma_grid // math.gcd(n_angular, sigma_grid)
    return base * max(1, -(-target // base))


def _profiles(d: ConformalDensity, pts: np.ndarray, radii, angles) -> np.ndarray:
    return _kernels.profiles(np.ascontiguousarray(pts.real), np.ascontiguousarray(pts.imag),
                             np.ascontiguousarray(radii), np.ascontiguousarray(angles),
                             *d.interp_data)


def _cost_arrays(mu, nu, rows, cols, cfg: CostConfig, workers: int | None = None):
    rule = quadrature_rule(cfg.R, cfg.quad_radial, cfg.quad_angular)
    na = cfg.quad_angular
    G = int(cfg.sigma_grid)
    L = fine_angular_count(na, G)
    fine = rule.angles[0] + 2.0 * math.pi * np.arange(L) / L
    prof_a = _profiles(mu, rows, rule.radii, rule.angles)
    prof_b = _profiles(nu, cols, rule.radii, fine)
    n, m = len(rows), len(cols)
    vals = np.empty((n, m))
    alphas = np.empty((n, m))

    def block(lo, hi):
        _kernels.cost_block(prof_a[lo:hi], prof_b, rule.weights, G, L // na,
                            cfg.refine_tol, N_REFINE, vals[lo:hi], alphas[lo:hi])

    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or n < 2:
        block(0, n)
    else:
        bounds = np.linspace(0, n, min(n, 4 * workers) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(lambda b: block(*b), zip(bounds[:-1], bounds[1:])))
    return vals, alphas


def local_cost(mu: ConformalDensity, nu: ConformalDensity, z0, w0,
               cfg: CostConfig | None = None) -> tuple[float, complex]:
    """Local cost at ``(z0, w0)`` and the minimising rotation ``sigma``.

    Returns
    -------
    value : float
        ``min_sigma Phi(sigma)`` (grid plus golden-section refinement).
    sigma_star : complex
        Unit complex number attaining ``value``; the optimal map is
        ``interpolating_mobius(z0, w0, sigma_star)``.
    """
    cfg = cfg or CostConfig()
    vals, alphas = _cost_arrays(mu, nu, _points([z0]), _points([w0]), cfg, workers=1)
    a = float(alphas[0, 0])
    return float(vals[0, 0]), complex(math.cos(a), math.sin(a))


def cost_matrix(mu: ConformalDensity, nu: ConformalDensity, row_pts, col_pts,
                cfg: CostConfig | None = None, workers: int | None = None) -> CostMatrix:
    """Local costs for every pair ``(row_pts[i], col_pts[j])``.

    Entries are independent, so the result does not depend on ``workers``.
    """
    cfg = cfg or CostConfig()
    rows = _points(row_pts)
    cols = _points(col_pts)
    if len(rows) == 0 or len(cols) == 0:
        raise InvalidInputError("point sets must be nonempty")
    vals, alphas = _cost_arrays(mu, nu, rows, cols, cfg, workers)
    np.maximum(vals, 0.0, out=vals)
    for a in (vals, rows, cols):
        a.setflags(write=False)
    return CostMatrix(vals, rows, cols, cfg, np.exp(1j * alphas))


def phi(mu: ConformalDensity, nu: ConformalDensity, z0, w0, sigma,
        cfg: CostConfig | None = None) -> float:
    """``Phi(sigma)`` evaluated directly on the nodes of ``Omega(z0, R)``.

    Independent of the compiled search path; intended for checks.
    """
    cfg = cfg or CostConfig()
    z0 = _points([z0])[0]
    w0 = _points([w0])[0]
    rule = quadrature_rule(cfg.R, cfg.quad_radial, cfg.quad_angular)
    u = rule.nodes
    z = from_origin(z0, u)
    w = from_origin(w0, complex(sigma) * u)
    return rule.integrate_values(np.abs(mu(z) - nu(w)))


def phi_invariant_form(mu: ConformalDensity, nu: ConformalDensity, z0, w0, sigma,
                       cfg: CostConfig | None = None) -> float:
    """``Phi(sigma)`` written as ``int |1 - nu(m z) / mu(z)| dvol_M``.

    ``dvol_M = mu dvol_H`` is the surface area element, so this is the
    coordinate-free form of the integrand. Requires ``mu > 0`` on the disk.
    """
    cfg = cfg or CostConfig()
    z0 = _points([z0])[0]
    w0 = _points([w0])[0]
    rule = quadrature_rule(cfg.R, cfg.quad_radial, cfg.quad_angular)
    u = rule.nodes
    z = from_origin(z0, u)
    w = from_origin(w0, complex(sigma) * u)
    a = mu(z)
    if np.any(a <= 0):
        raise InvalidInputError("invariant form needs a strictly positive first density")
    return rule.integrate_values(np.abs(1.0 - nu(w) / a) * a)


def boundary_limit_cost(w_prime, zeta: ConformalDensity, cfg: CostConfig | None = None) -> float:
    """``int_{Omega(0, R)} |zeta((w + w') / (1 + conj(w') w))| dvol_H(w)``.

    The limit of the local cost between a density and ``zeta`` when the first
    point tends to the circle and the first density vanishes there.
    """
    cfg = cfg or CostConfig()
    wp = _points([w_prime])[0]
    rule = quadrature_rule(cfg.R, cfg.quad_radial, cfg.quad_angular)
    vals = zeta(from_origin(wp, rule.nodes))
    return rule.integrate_values(np.abs(vals))


def symmetric_cost_matrix(mu, nu, row_pts: Sequence, col_pts: Sequence,
                          cfg: CostConfig | None = None, workers: int | None = None):
    """Average of ``cost_matrix(mu, nu)`` and the transpose of ``cost_matrix(nu, mu)``."""
    a = cost_matrix(mu, nu, row_pts, col_pts, cfg, workers)
    b = cost_matrix(nu, mu, col_pts, row_pts, cfg, workers)
    return 0.5 * (a.values + b.values.T), float(np.max(np.abs(a.values - b.values.T)))
