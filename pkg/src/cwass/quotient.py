"""Quotient (Mobius-minimised) Wasserstein distance and a self-fittability scan.

``quotient_distance`` minimises, over disk automorphisms ``m``, the optimal
transport cost between ``m_* mu`` and ``nu`` with the hyperbolic distance as
ground cost. The outer search is a polar grid over ``(a, theta)`` with
``|a| <= a_max``. The best grid candidates are improved by alternating
between the optimal plan and a Mobius fit to that plan (each step lowers the
objective), and the best results are polished by Nelder-Mead.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .density import ConformalDensity
from .errors import InvalidParameterError
from .hyperbolic import MobiusTransform, geodesic_volume, hyperbolic_median, quadrature_rule
from .localcost import CostConfig, _profiles, default_workers, fine_angular_count
from .transport import TransportPlan, TransportProblem, solve, subsample


@dataclass(frozen=True)
class QuotientConfig:
    """Search parameters.

    ``a_grid`` radial levels (plus ``a = 0``) times ``a_angles`` directions
    for the translation part, ``theta_grid`` rotations. Plan/fit alternation
    (at most ``fit_iter`` rounds) starts from ``rotation_starts`` pure
    rotations and from the ``n_starts`` best grid points; Nelder-Mead polishes
    the ``n_polish`` best outcomes.
    """

    a_grid: int = 8
    a_angles: int = 16
    theta_grid: int = 16
    a_max: float = 0.9
    ot_points: int = 64
    n_starts: int = 48
    rotation_starts: int = 32
    n_polish: int = 3
    fit_iter: int = 30
    max_iter: int = 400
    xatol: float = 1e-7
    fatol: float = 1e-10
    tol: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        for name in ("a_grid", "a_angles", "theta_grid", "ot_points", "n_starts",
                     "rotation_starts", "n_polish", "fit_iter", "max_iter"):
            if int(getattr(self, name)) < 1:
                raise InvalidParameterError(f"{name} must be a positive integer")
        if not 0 < self.a_max < 1:
            raise InvalidParameterError("a_max must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "QuotientConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True, eq=False)
class QuotientResult:
    distance: float
    m_star: MobiusTransform
    plan: TransportPlan
    search_trace: list = field(default_factory=list)
    grid_best: float = math.inf

    def to_json(self) -> str:
        doc = {
            "distance": float(self.distance),
            "m_star": {"a": [self.m_star.a.real, self.m_star.a.imag], "theta": self.m_star.theta},
            "grid_best": float(self.grid_best),
            "plan": json.loads(self.plan.to_json()),
            "search_trace": [{"a": [a.real, a.imag], "theta": t, "value": v, "stage": s}
                             for (a, t, v, s) in self.search_trace],
        }
        return json.dumps(doc)


def hyperbolic_cost(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Matrix of ``d_H(z_i, w_j)``."""
    z = np.asarray(z)[:, None]
    w = np.asarray(w)[None, :]
    ratio = np.abs(z - w) / np.abs(1.0 - np.conj(z) * w)
    return np.arctanh(np.minimum(ratio, 1.0 - 1e-16))


class _Objective:
    """Transport cost between centred copies of the two supports.

    Both densities are moved so that their mass-weighted hyperbolic medians
    sit at the origin; a map ``m`` found here corresponds to
    ``T_nu^-1 o m o T_mu`` on the original densities.
    """

    def __init__(self, mu, nu, cfg: QuotientConfig):
        ri, self.ra = subsample(mu, cfg.ot_points, cfg.seed)
        ci, self.ca = subsample(nu, cfg.ot_points, cfg.seed)
        self.t_mu = MobiusTransform(hyperbolic_median(mu.points, mu.mass), 0.0)
        self.t_nu = MobiusTransform(hyperbolic_median(nu.points, nu.mass), 0.0)
        self.z = self.t_mu(mu.points[ri])
        self.w = self.t_nu(nu.points[ci])
        self.ri, self.ci = ri, ci

    def original(self, m: MobiusTransform) -> MobiusTransform:
        return self.t_nu.inverse().compose(m.compose(self.t_mu))

    def problem(self, m: MobiusTransform) -> TransportProblem:
        return TransportProblem(hyperbolic_cost(m(self.z), self.w), self.ra, self.ca)

    def __call__(self, m: MobiusTransform) -> float:
        return solve(self.problem(m)).objective


def _cap(p, a_max):
    """Smooth bijection from the plane onto the open disk of radius ``a_max``."""
    r = math.hypot(p[0], p[1])
    if r == 0.0:
        return 0j
    return a_max * math.tanh(r) / r * complex(p[0], p[1])


def _uncap(a: complex, a_max):
    r = abs(a)
    if r == 0.0:
        return np.zeros(2)
    s = math.atanh(min(r / a_max, 0.995)) / r
    return np.array([a.real * s, a.imag * s])


def mobius_grid(cfg: QuotientConfig) -> list[MobiusTransform]:
    radii = cfg.a_max * np.arange(1, cfg.a_grid + 1) / cfg.a_grid
    dirs = np.exp(2j * math.pi * np.arange(cfg.a_angles) / cfg.a_angles)
    centres = [0j] + [complex(r * d) for r in radii for d in dirs]
    thetas = 2.0 * math.pi * np.arange(cfg.theta_grid) / cfg.theta_grid
    return [MobiusTransform(a, t) for a in centres for t in thetas]


def _params(m: MobiusTransform, a_max) -> np.ndarray:
    return np.array([*_uncap(m.a, a_max), m.theta])


def _from_params(x, a_max) -> MobiusTransform:
    return MobiusTransform(_cap(x[:2], a_max), x[2])


def _plan_fit(obj: _Objective, m0: MobiusTransform, cfg: QuotientConfig, trace: list):
    """Alternate optimal plans and Mobius fits to the current plan.

    For a fixed coupling the objective is a smooth sum of weighted hyperbolic
    distances in the three map parameters; the new map is kept only when the
    full transport objective decreases.
    """
    m, v = m0, obj(m0)
    for _ in range(cfg.fit_iter):
        c = solve(obj.problem(m)).coupling.tocoo()
        z, w, wt = obj.z[c.row], obj.w[c.col], c.data

        def f(x):
            u = _from_params(x, cfg.a_max)(z)
            r = np.abs(u - w) / np.abs(1.0 - np.conj(u) * w)
            return float(np.sum(wt * np.arctanh(np.minimum(r, 1.0 - 1e-16))))

        res = minimize(f, _params(m, cfg.a_max), method="Nelder-Mead",
                       options={"xatol": cfg.xatol, "fatol": cfg.fatol, "maxiter": cfg.max_iter,
                                "initial_simplex": _simplex(_params(m, cfg.a_max))})
        m_new = _from_params(res.x, cfg.a_max)
        v_new = obj(m_new)
        trace.append((m_new.a, m_new.theta, float(v_new), "fit"))
        if not v_new < v - cfg.fatol:
            break
        m, v = m_new, v_new
    return m, v


def quotient_distance(mu: ConformalDensity, nu: ConformalDensity,
                      cfg: QuotientConfig | None = None,
                      workers: int | None = None) -> QuotientResult:
    """Minimum over Mobius maps of the hyperbolic-cost transport distance.

    The search runs between copies of the densities centred at their
    hyperbolic medians, which makes it independent of a Mobius motion applied
    to either input. The identity of the original problem is always among the
    candidates, so the result never exceeds the unaligned transport cost.
    Local searches run in the parameters ``(p_x, p_y, theta)`` with
    ``a = a_max tanh|p| p/|p|``, which keeps them inside ``|a| < a_max``.
    """
    cfg = cfg or QuotientConfig()
    obj = _Objective(mu, nu, cfg)
    grid = mobius_grid(cfg)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            values = list(ex.map(obj, grid))
    else:
        values = [obj(m) for m in grid]
    trace = [(m.a, m.theta, float(v), "grid") for m, v in zip(grid, values)]
    order = np.argsort(values, kind="stable")
    grid_best = float(values[order[0]])

    # after centring, pure rotations are the natural candidates; always try them
    starts = [MobiusTransform(0j, 2.0 * math.pi * k / cfg.rotation_starts)
              for k in range(cfg.rotation_starts)]
    starts += [grid[k] for k in order[: cfg.n_starts]]
    starts.append(obj.t_nu.compose(obj.t_mu.inverse()))
    fitted = [_plan_fit(obj, m, cfg, trace) for m in starts]
    fitted.sort(key=lambda mv: mv[1])
    best_m, best_v = fitted[0]

    for m0, v0 in fitted[: cfg.n_polish]:
        x0 = _params(m0, cfg.a_max)

        def f(x):
            m = _from_params(x, cfg.a_max)
            v = obj(m)
            trace.append((m.a, m.theta, float(v), "refine"))
            return v

        res = minimize(f, x0, method="Nelder-Mead",
                       options={"xatol": cfg.xatol, "fatol": cfg.fatol,
                                "maxiter": cfg.max_iter, "initial_simplex": _simplex(x0)})
        if res.fun < best_v:
            best_v = float(res.fun)
            best_m = _from_params(res.x, cfg.a_max)

    plan = solve(obj.problem(best_m))
    plan = TransportPlan(plan.coupling, plan.objective, plan.is_permutation, plan.u, plan.v,
                         {**plan.meta, "row_support": obj.ri.tolist(),
                          "col_support": obj.ci.tolist()})
    trace = [(*_original_params(obj, a, t), v, stage) for a, t, v, stage in trace]
    return QuotientResult(plan.objective, obj.original(best_m), plan, trace, grid_best)


def _original_params(obj: _Objective, a, theta):
    m = obj.original(MobiusTransform(a, theta))
    return m.a, m.theta


def _simplex(x0):
    # step sizes of about one grid cell
    steps = np.array([0.15, 0.15, 0.2])
    return np.vstack([x0] + [x0 + np.eye(3)[k] * steps[k] for k in range(3)])


@dataclass(frozen=True)
class FittabilityReport:
    """Outcome of :func:`self_fittability_scan`.

    ``flags`` lists ``(z0, w0, sigma, residual)`` for non-identity maps with
    residual below ``threshold``; ``identity_residual`` is the largest
    residual of the identity over the scanned centres.
    """

    centres: list
    threshold: float
    identity_residual: float
    flags: list
    min_nonidentity: float

    @property
    def flagged(self) -> bool:
        return bool(self.flags)


def scan_centres(n_ring: int = 8, radius: float = 0.5) -> np.ndarray:
    ring = radius * np.exp(2j * math.pi * np.arange(n_ring) / n_ring)
    return np.concatenate([[0j], ring])


def self_fittability_scan(mu: ConformalDensity, R: float | None = None,
                          cfg: CostConfig | None = None, centres=None,
                          threshold: float | None = None) -> FittabilityReport:
    """Heuristic search for near self-isometries of a density.

    For every pair of scan centres ``(z0, w0)`` and every grid rotation
    ``sigma`` the residual ``int_{Omega(z0,R)} |mu - mu o m| dvol_H`` of the
    map sending ``z0`` to ``w0`` with rotation ``sigma`` is computed. Maps
    other than the identity whose residual falls below ``threshold``
    (default ``1e-3 * Vol_H(Omega(0, R))``) are flagged. This is a
    diagnostic, not a decision procedure.
    """
    cfg = cfg or CostConfig()
    R = cfg.R if R is None else float(R)
    if not R > 0:
        raise InvalidParameterError("R must be positive")
    thr = 1e-3 * geodesic_volume(R) if threshold is None else float(threshold)
    pts = scan_centres() if centres is None else np.asarray(centres, dtype=complex)
    rule = quadrature_rule(R, cfg.quad_radial, cfg.quad_angular)
    G = int(cfg.sigma_grid)
    L = fine_angular_count(cfg.quad_angular, G)
    fine = rule.angles[0] + 2.0 * math.pi * np.arange(L) / L
    pa = _profiles(mu, pts, rule.radii, rule.angles)
    pb = _profiles(mu, pts, rule.radii, fine)
    res = _kernels.grid_residuals(pa, pb, rule.weights, G, L // cfg.quad_angular)
    flags = []
    ident = 0.0
    min_non = math.inf
    for i in range(len(pts)):
        for j in range(len(pts)):
            for s in range(G):
                v = float(res[i, j, s])
                if i == j and s == 0:
                    ident = max(ident, v)
                    continue
                min_non = min(min_non, v)
                if v < thr:
                    flags.append((complex(pts[i]), complex(pts[j]),
                                  complex(np.exp(2j * math.pi * s / G)), v))
    return FittabilityReport(pts.tolist(), thr, ident, flags, min_non)
