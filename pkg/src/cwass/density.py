"""Sampled hyperbolic densities on the Poincare disk.

A :class:`ConformalDensity` stores sample points ``z_i``, the hyperbolic
density value ``mu_i`` at each sample (the Euclidean conformal factor times
``(1 - |z|^2)^2``) and a cell mass ``mass_i`` with ``sum(mass) = 1``.

Between samples the density is interpolated on the hyperbolic Delaunay
triangulation of the samples. Weights are hyperbolic barycentric
coordinates, so the interpolant transforms exactly like the samples under
disk automorphisms. Two rules are available:

``"pwl"``
    barycentric combination of the sample values; nearest sample (in the
    hyperbolic metric) outside the hull of the samples.
``"pwl-decay"``
    the same inside the hull; outside, the value at the nearest hull point
    damped by ``exp(-4 d)`` with ``d`` the distance to the hull. The
    extension decays like ``(1 - |z|^2)^2`` towards the circle, as a
    finite-area surface must.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, NamedTuple

import numpy as np
from scipy import optimize
from scipy.spatial import ConvexHull, Delaunay, QhullError

from . import _kernels
from .errors import InvalidInputError, InvalidParameterError
from .hyperbolic import DiskPoint, MobiusTransform

SCHEMA = "cwass-density/1"
INTERP_RULES = {"pwl": _kernels.MODE_PWL, "pwl-decay": _kernels.MODE_DECAY}
CLAMP_RADIUS = 1.0 - 1e-6
MASS_TOL = 1e-9


class InterpData(NamedTuple):
    X: np.ndarray
    mu: np.ndarray
    tri: np.ndarray
    tri_org: np.ndarray
    tri_inv: np.ndarray
    tri_gram: np.ndarray
    cell_start: np.ndarray
    cell_tris: np.ndarray
    nb: int
    edges: np.ndarray
    edge_gram: np.ndarray
    mode: int


def hyperboloid_lift(z: np.ndarray) -> np.ndarray:
    """Rows ``(1 + |z|^2, 2x, 2y) / (1 - |z|^2)``."""
    z = np.asarray(z, dtype=complex)
    r2 = z.real**2 + z.imag**2
    s = 1.0 - r2
    return np.stack([(1.0 + r2) / s, 2.0 * z.real / s, 2.0 * z.imag / s], axis=-1)


def _minkowski(X, Y):
    return X[..., 0] * Y[..., 0] - X[..., 1] * Y[..., 1] - X[..., 2] * Y[..., 2]


def hyperbolic_delaunay(z: np.ndarray) -> np.ndarray:
    """Triangles of the hyperbolic Delaunay triangulation of ``z``.

    Lower hull of the paraboloid lift, seen from the point projectively
    identified with the apex of the light cone. Falls back to a planar
    triangulation in Klein coordinates when the lifted points are coplanar.
    """
    z = np.asarray(z, dtype=complex)
    n = len(z)
    if n < 3:
        return np.zeros((0, 3), dtype=np.int64)
    pts = np.column_stack([z.real, z.imag, z.real**2 + z.imag**2])
    try:
        hull = ConvexHull(pts)
    except (QhullError, ValueError):
        X = hyperboloid_lift(z)
        k = X[:, 1:] / X[:, :1]
        try:
            return np.asarray(Delaunay(k).simplices, dtype=np.int64)
        except (QhullError, ValueError):
            return np.zeros((0, 3), dtype=np.int64)
    eq = hull.equations
    keep = (-eq[:, 2] + eq[:, 3]) > 1e-14
    return np.ascontiguousarray(hull.simplices[keep], dtype=np.int64)


def _build_interp(points: np.ndarray, mu: np.ndarray, mode: int) -> InterpData:
    X = hyperboloid_lift(points)
    tri = hyperbolic_delaunay(points)
    k = X[:, 1:] / X[:, :1]
    keep = []
    org = []
    inv = []
    for t, (i, j, l) in enumerate(tri):
        e1 = k[j] - k[i]
        e2 = k[l] - k[i]
        det = e1[0] * e2[1] - e1[1] * e2[0]
        if abs(det) < 1e-300:
            continue
        keep.append(t)
        org.append(k[i])
        inv.append([e2[1] / det, -e2[0] / det, -e1[1] / det, e1[0] / det])
    tri = np.ascontiguousarray(tri[keep], dtype=np.int64).reshape(-1, 3)
    tri_org = np.asarray(org, dtype=float).reshape(-1, 2)
    tri_inv = np.asarray(inv, dtype=float).reshape(-1, 4)
    G = lambda a, b: _minkowski(X[a], X[b])  # noqa: E731
    if len(tri):
        tri_gram = np.column_stack([G(tri[:, 0], tri[:, 1]), G(tri[:, 0], tri[:, 2]),
                                    G(tri[:, 1], tri[:, 2])])
    else:
        tri_gram = np.zeros((0, 3))

    # uniform bucket grid over the Klein square
    nb = max(1, int(math.ceil(math.sqrt(max(len(tri), 1)))))
    buckets = [[] for _ in range(nb * nb)]
    for t in range(len(tri)):
        kk = k[tri[t]]
        lo = np.floor((kk.min(axis=0) - 1e-9 + 1.0) * 0.5 * nb).astype(int)
        hi = np.floor((kk.max(axis=0) + 1e-9 + 1.0) * 0.5 * nb).astype(int)
        lo = np.clip(lo, 0, nb - 1)
        hi = np.clip(hi, 0, nb - 1)
        for cy in range(lo[1], hi[1] + 1):
            for cx in range(lo[0], hi[0] + 1):
                buckets[cy * nb + cx].append(t)
    cell_start = np.zeros(nb * nb + 1, dtype=np.int64)
    cell_start[1:] = np.cumsum([len(b) for b in buckets])
    cell_tris = np.asarray([t for b in buckets for t in b], dtype=np.int64)

    # hull boundary = edges used by exactly one triangle
    if len(tri):
        e = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [0, 2]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        edges = np.ascontiguousarray(uniq[counts == 1], dtype=np.int64)
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    edge_gram = G(edges[:, 0], edges[:, 1]) if len(edges) else np.zeros(0)
    return InterpData(X, np.ascontiguousarray(mu, dtype=float), tri, tri_org, tri_inv,
                      tri_gram, cell_start, cell_tris, nb, edges,
                      np.ascontiguousarray(edge_gram), mode)


@dataclass(frozen=True, eq=False)
class ConformalDensity:
    """Sampled hyperbolic density with an interpolation rule.

    Parameters
    ----------
    points : array_like of complex
        Sample locations strictly inside the unit disk.
    mu : array_like of float
        Nonnegative hyperbolic density values at the samples.
    mass : array_like of float
        Nonnegative cell masses. They must sum to 1 unless ``normalize`` is set.
    interp : str
        ``"pwl"`` or ``"pwl-decay"``.
    meta : mapping
        Free-form provenance record (JSON-serializable).
    normalize : bool
        Rescale masses (and values) to unit total mass on construction.

    Samples closer than ``1e-6`` to the circle are moved radially inwards and
    counted in ``meta["clamped"]``.
    """

    points: np.ndarray
    mu: np.ndarray
    mass: np.ndarray
    interp: str = "pwl"
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __init__(self, points, mu, mass=None, interp: str = "pwl", meta=None,
                 normalize: bool = False):
        pts = np.array(points, dtype=complex).reshape(-1)
        mu = np.array(mu, dtype=float).reshape(-1)
        n = len(pts)
        if n == 0:
            raise InvalidInputError("density needs at least one sample")
        mass = np.full(n, 1.0 / n) if mass is None else np.array(mass, dtype=float).reshape(-1)
        if len(mu) != n or len(mass) != n:
            raise InvalidInputError("points, mu and mass must have equal length")
        if interp not in INTERP_RULES:
            raise InvalidParameterError(f"unknown interpolation rule {interp!r}")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(mass))):
            raise InvalidInputError("density samples must be finite")
        if np.any(mu < 0) or np.any(mass < 0):
            raise InvalidInputError("density values and masses must be nonnegative")
        meta = dict(meta or {})
        r = np.abs(pts)
        out = r > CLAMP_RADIUS
        if np.any(out):
            pts[out] *= CLAMP_RADIUS / r[out]
            meta["clamped"] = int(meta.get("clamped", 0)) + int(out.sum())
        total = float(mass.sum())
        if normalize:
            if not total > 0:
                raise InvalidInputError("total mass must be positive")
            mass = mass / total
            mu = mu / total
        elif abs(total - 1.0) > MASS_TOL:
            raise InvalidInputError(f"masses sum to {total!r}, expected 1")
        for a in (pts, mu, mass):
            a.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "interp", interp)
        object.__setattr__(self, "meta", meta)
        object.__setattr__(self, "_lock", threading.Lock())

    def __len__(self):
        return len(self.points)

    @property
    def samples(self) -> list[tuple[DiskPoint, float, float]]:
        return [(DiskPoint.from_complex(p), float(v), float(w))
                for p, v, w in zip(self.points, self.mu, self.mass)]

    @cached_property
    def interp_data(self) -> InterpData:
        with self._lock:
            return _build_interp(self.points, self.mu, INTERP_RULES[self.interp])

    def __call__(self, z):
        """Evaluate at complex scalar or array ``z``."""
        z = np.asarray(z, dtype=complex)
        if np.any(np.abs(z) >= 1.0):
            raise InvalidInputError("evaluation points must lie inside the unit disk")
        flat = np.ascontiguousarray(z.reshape(-1))
        vals = _kernels.eval_many(np.ascontiguousarray(flat.real),
                                  np.ascontiguousarray(flat.imag), *self.interp_data)
        return float(vals[0]) if z.ndim == 0 else vals.reshape(z.shape)

    def with_samples(self, points=None, mu=None, mass=None, meta=None, interp=None):
        return ConformalDensity(self.points if points is None else points,
                                self.mu if mu is None else mu,
                                self.mass if mass is None else mass,
                                interp=self.interp if interp is None else interp,
                                meta=self.meta if meta is None else meta)

    def __eq__(self, other):
        if not isinstance(other, ConformalDensity):
            return NotImplemented
        return (self.interp == other.interp and np.array_equal(self.points, other.points)
                and np.array_equal(self.mu, other.mu) and np.array_equal(self.mass, other.mass))

    __hash__ = object.__hash__


def evaluate(d: ConformalDensity, z) -> float:
    if len(d) == 0:
        raise InvalidInputError("empty density")
    if isinstance(z, DiskPoint):
        z = z.z
    return d(z)


def pull_back(d: ConformalDensity, m: MobiusTransform) -> ConformalDensity:
    """Density ``z -> mu(m(z))``: samples move to ``m^{-1}(z_i)``."""
    return d.with_samples(points=m.inverse()(d.points))


def push_forward(d: ConformalDensity, m: MobiusTransform) -> ConformalDensity:
    """Density ``w -> mu(m^{-1}(w))``: samples move to ``m(z_i)``."""
    return d.with_samples(points=m(d.points))


def total_mass(d: ConformalDensity) -> float:
    return float(np.sum(d.mass))


def renormalize(d: ConformalDensity) -> ConformalDensity:
    """Scale masses and values together so the masses sum to one."""
    total = total_mass(d)
    if not total > 0:
        raise InvalidInputError("total mass must be positive")
    if total == 1.0:
        return d
    return ConformalDensity(d.points, d.mu, d.mass, interp=d.interp, meta=d.meta,
                            normalize=True)


# ---------------------------------------------------------------- generators

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def ring_layout(n: int) -> np.ndarray:
    """``n`` points in the unit disk, one per equal-area cell.

    A centre point plus concentric rings whose counts grow linearly. When
    ``n - 1`` is a multiple of 8 every ring count is too, which makes the
    layout invariant under rotation by ``pi / 4``.
    """
    if n < 1:
        raise InvalidParameterError("n must be positive")
    if n == 1:
        return np.zeros(1, dtype=complex)
    rest = n - 1
    unit = 8 if rest % 8 == 0 else 1
    units = rest // unit
    K = max(1, int(round(math.sqrt(rest / 3.0))))
    K = min(K, units)
    share = units * np.arange(1, K + 1) / (K * (K + 1) / 2.0)
    counts = np.floor(share).astype(int)
    counts = np.maximum(counts, 1)
    while counts.sum() > units:
        counts[np.argmax(counts)] -= 1
    order = np.argsort(-(share - np.floor(share)), kind="stable")
    i = 0
    while counts.sum() < units:
        counts[order[i % K]] += 1
        i += 1
    counts *= unit
    out = [0j]
    done = 1
    for k, c in enumerate(counts, start=1):
        r = math.sqrt((done + 0.5 * c) / n)
        off = 2.0 * math.pi * ((k * _GOLDEN) % 1.0) / c
        ang = off + 2.0 * math.pi * np.arange(c) / c
        out.extend(r * np.exp(1j * ang))
        done += c
    return np.asarray(out)


@dataclass(frozen=True)
class Bump:
    center: complex
    height: float
    width: float


class _LogBumpField:
    """Euclidean density ``exp(sum_b h_b exp(-|z-c_b|^2 / 2w_b^2)) / Z`` on the unit disk."""

    n_gl = 96
    n_theta = 128

    def __init__(self, bumps):
        self.bumps = list(bumps)
        self.x, self.w = np.polynomial.legendre.leggauss(self.n_gl)
        self.theta = 2.0 * math.pi * np.arange(self.n_theta) / self.n_theta
        self.Z = self._radial(1.0)

    def raw(self, z):
        z = np.asarray(z, dtype=complex)
        s = np.zeros(z.shape)
        for b in self.bumps:
            s += b.height * np.exp(-np.abs(z - b.center) ** 2 / (2.0 * b.width**2))
        return np.exp(s)

    def density(self, z):
        return self.raw(z) / self.Z

    def _ring(self, r):
        r = np.asarray(r, dtype=float)
        vals = self.raw(r[..., None] * np.exp(1j * self.theta))
        return vals.mean(axis=-1) * 2.0 * math.pi

    def _radial(self, rho):
        r = 0.5 * rho * (self.x + 1.0)
        return 0.5 * rho * float(np.sum(self.w * r * self._ring(r)))

    def _angular(self, rho, phi):
        t = 0.5 * phi * (self.x + 1.0)
        return 0.5 * phi * float(np.sum(self.w * self.raw(rho * np.exp(1j * t))))

    def transport(self, base: np.ndarray) -> np.ndarray:
        """Knothe-Rosenblatt map from the uniform disk to this density."""
        out = np.empty(len(base), dtype=complex)
        for i, b in enumerate(base):
            u1 = abs(b) ** 2
            u2 = (math.atan2(b.imag, b.real) % (2.0 * math.pi)) / (2.0 * math.pi)
            if u1 <= 0.0:
                rho = 0.0
            else:
                rho = optimize.brentq(lambda p: self._radial(p) / self.Z - u1, 0.0, 1.0,
                                      xtol=1e-15, rtol=1e-15)
            if rho == 0.0:
                out[i] = 0j
                continue
            g = float(self._ring(rho))
            phi = optimize.brentq(lambda p: self._angular(rho, p) / g - u2, 0.0, 2.0 * math.pi,
                                  xtol=1e-15, rtol=1e-15) if 0.0 < u2 < 1.0 else 0.0
            out[i] = rho * complex(math.cos(phi), math.sin(phi))
        return out


def _parse_bumps(spec) -> list[Bump]:
    out = []
    for b in spec:
        if isinstance(b, Bump):
            out.append(b)
        elif isinstance(b, Mapping):
            c = b.get("center", 0.0)
            c = complex(*c) if isinstance(c, (list, tuple)) else complex(c)
            out.append(Bump(c, float(b.get("height", 0.0)), float(b.get("width", 0.3))))
        else:
            c, h, w = b
            c = complex(*c) if isinstance(c, (list, tuple)) else complex(c)
            out.append(Bump(c, float(h), float(w)))
    return out


def random_bumps(rng: np.random.Generator, n_bumps: int | None = None) -> list[Bump]:
    """Random log-bump parameters: centres within radius 0.6, mixed-sign heights."""
    k = int(rng.integers(2, 5)) if n_bumps is None else int(n_bumps)
    out = []
    for _ in range(k):
        r = 0.6 * math.sqrt(rng.uniform())
        a = rng.uniform(0.0, 2.0 * math.pi)
        out.append(Bump(complex(r * math.cos(a), r * math.sin(a)),
                        float(rng.uniform(-1.5, 3.0)), float(rng.uniform(0.15, 0.35))))
    return out


def synthesize(kind, seed: int = 0, n: int = 64, interp: str = "pwl-decay",
               **params) -> ConformalDensity:
    """Deterministic synthetic density of a planar disk-type surface.

    Parameters
    ----------
    kind : str or mapping
        ``"flat-disk"``, ``"gaussian-bump"`` (``center``, ``height``,
        ``width``) or ``"multi-bump"`` (``n_bumps`` random bumps drawn from
        ``seed``, or an explicit ``bumps`` list). A mapping with a ``"kind"``
        key and the same parameters is also accepted.
    seed : int
        Seed for the random generator (only ``multi-bump`` draws from it).
    n : int
        Number of samples.

    Returns
    -------
    ConformalDensity
        Uniform masses ``1/n``; sample points distributed so that every
        sample carries the same surface area.

    Notes
    -----
    Bumps act on the logarithm of the Euclidean conformal factor, so a
    bump of height ``h`` scales local area by up to ``exp(h)``.
    """
    if isinstance(kind, Mapping):
        params = {**{k: v for k, v in kind.items() if k != "kind"}, **params}
        kind = kind.get("kind")
    base = ring_layout(int(n))
    meta: dict[str, Any] = {"generator": str(kind), "seed": int(seed), "n": int(n)}
    if kind == "flat-disk":
        bumps: list[Bump] = []
    elif kind == "gaussian-bump":
        c = params.get("center", 0.0)
        c = complex(*c) if isinstance(c, (list, tuple)) else complex(c)
        bumps = [Bump(c, float(params.get("height", 3.0)), float(params.get("width", 0.3)))]
    elif kind == "multi-bump":
        if "bumps" in params:
            bumps = _parse_bumps(params["bumps"])
        else:
            bumps = random_bumps(np.random.default_rng(seed), params.get("n_bumps"))
    else:
        raise InvalidParameterError(f"unknown generator kind {kind!r}")
    meta["bumps"] = [{"center": [b.center.real, b.center.imag], "height": b.height,
                      "width": b.width} for b in bumps]
    if bumps and any(b.height != 0.0 for b in bumps):
        field_ = _LogBumpField(bumps)
        pts = field_.transport(base)
        tilde = field_.density(pts)
    else:
        pts = base
        tilde = np.full(len(base), 1.0 / math.pi)
    mu = tilde * (1.0 - np.abs(pts) ** 2) ** 2
    return ConformalDensity(pts, mu, np.full(len(pts), 1.0 / len(pts)), interp=interp, meta=meta)


# ---------------------------------------------------------------- file format

def density_to_json(d: ConformalDensity) -> str:
    doc = {
        "schema": SCHEMA,
        "interp": d.interp,
        "samples": [{"z": [float(p.real), float(p.imag)], "mu": float(v), "mass": float(w)}
                    for p, v, w in zip(d.points, d.mu, d.mass)],
        "meta": d.meta,
    }
    return json.dumps(doc, indent=None, separators=(",", ":"))


def density_from_json(text: str) -> ConformalDensity:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"not a JSON document: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise InvalidInputError(f"expected schema {SCHEMA!r}")
    try:
        s = doc["samples"]
        pts = [complex(e["z"][0], e["z"][1]) for e in s]
        mu = [e["mu"] for e in s]
        mass = [e["mass"] for e in s]
    except (KeyError, IndexError, TypeError) as exc:
        raise InvalidInputError(f"malformed samples: {exc}") from exc
    return ConformalDensity(pts, mu, mass, interp=doc.get("interp", "pwl"),
                            meta=doc.get("meta") or {})


def save_density(d: ConformalDensity, path) -> None:
    Path(path).write_text(density_to_json(d) + "\n")


def load_density(path) -> ConformalDensity:
    return density_from_json(Path(path).read_text())
