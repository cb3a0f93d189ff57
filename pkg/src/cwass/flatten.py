"""Disk-topology meshes and their approximate conformal flattening.

The map to the unit disk is the cotangent-weight harmonic map with the
boundary placed on the circle by arc length, followed by a corrective pass
that slides the boundary along the circle to lower the conformal energy
``E_D - A`` (Dirichlet energy minus image area, zero exactly for conformal
maps). Per-vertex densities come from one-ring area ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .density import ConformalDensity, push_forward
from .errors import ConvergenceError, MeshFormatError, TopologyError
from .hyperbolic import MobiusTransform, hyperbolic_median

AREA_EPS = 1e-14


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Validated triangle mesh with disk topology.

    ``boundary`` lists the boundary loop in the direction induced by the
    face orientation.
    """

    vertices: np.ndarray
    faces: np.ndarray
    boundary: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_areas(self) -> np.ndarray:
        return triangle_areas(self.vertices, self.faces)

    def transformed(self, R: np.ndarray, t=(0.0, 0.0, 0.0)) -> "SurfaceMesh":
        """Rigidly moved copy (rows ``R @ v + t``)."""
        v = self.vertices @ np.asarray(R, dtype=float).T + np.asarray(t, dtype=float)
        return SurfaceMesh(v, self.faces, self.boundary)


def triangle_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    p = vertices[faces]
    if p.shape[-1] == 2:
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)


def _orient(faces: np.ndarray) -> np.ndarray:
    """Make face orientations consistent; raise if the surface is not orientable."""
    faces = faces.copy()
    nf = len(faces)
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for f, (a, b, c) in enumerate(faces):
        for u, v in ((a, b), (b, c), (c, a)):
            edge_faces.setdefault((min(u, v), max(u, v)), []).append(f)
    for e, fs in edge_faces.items():
        if len(fs) > 2:
            raise TopologyError(f"non-manifold edge {e} shared by {len(fs)} faces")
    seen = np.zeros(nf, dtype=bool)
    for start in range(nf):
        if seen[start]:
            continue
        seen[start] = True
        stack = [start]
        while stack:
            f = stack.pop()
            a, b, c = faces[f]
            for u, v in ((a, b), (b, c), (c, a)):
                for g in edge_faces[(min(u, v), max(u, v))]:
                    if g == f:
                        continue
                    ga, gb, gc = faces[g]
                    same = (u, v) in ((ga, gb), (gb, gc), (gc, ga))
                    if not seen[g]:
                        if same:
                            faces[g] = faces[g][::-1]
                        seen[g] = True
                        stack.append(g)
                    elif same:
                        raise TopologyError("mesh is not orientable")
    return faces


def _boundary_loops(faces: np.ndarray) -> list[list[int]]:
    directed = set()
    for a, b, c in faces:
        directed.update(((a, b), (b, c), (c, a)))
    nxt: dict[int, list[int]] = {}
    for u, v in directed:
        if (v, u) not in directed:
            nxt.setdefault(u, []).append(v)
    for u, vs in nxt.items():
        if len(vs) > 1:
            raise TopologyError(f"non-manifold boundary vertex {u}")
    loops = []
    todo = set(nxt)
    while todo:
        s = min(todo)
        loop = [s]
        todo.discard(s)
        v = nxt[s][0]
        while v != s:
            if v not in todo:
                raise TopologyError("boundary edges do not form simple loops")
            loop.append(v)
            todo.discard(v)
            v = nxt[v][0]
        loops.append(loop)
    return loops


def _check_vertex_fans(faces: np.ndarray, n: int):
    """Each vertex's incident faces must form a single fan."""
    inc: list[list[int]] = [[] for _ in range(n)]
    for f, tri in enumerate(faces):
        for v in tri:
            inc[v].append(f)
    for v in range(n):
        fs = inc[v]
        if not fs:
            raise MeshFormatError(f"vertex {v} is not used by any face")
        # faces around v are linked when they share an edge through v
        links: dict[int, list[int]] = {}
        for f in fs:
            for w in faces[f]:
                if w != v:
                    links.setdefault(w, []).append(f)
        parent = {f: f for f in fs}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for group in links.values():
            for g in group[1:]:
                parent[find(g)] = find(group[0])
        if len({find(f) for f in fs}) != 1:
            raise TopologyError(f"vertex {v} is non-manifold (several face fans)")


def make_mesh(vertices, faces) -> SurfaceMesh:
    """Validate and orient a triangle mesh; require disk topology."""
    V = np.asarray(vertices, dtype=float)
    F = np.asarray(faces, dtype=np.int64)
    if V.ndim != 2 or V.shape[1] not in (2, 3):
        raise MeshFormatError("vertices must be an (n, 3) array")
    if V.shape[1] == 2:
        V = np.column_stack([V, np.zeros(len(V))])
    if F.ndim != 2 or F.shape[1] != 3 or len(F) == 0:
        raise MeshFormatError("faces must be a nonempty (f, 3) array")
    if not np.all(np.isfinite(V)):
        raise MeshFormatError("vertex coordinates must be finite")
    if F.min() < 0 or F.max() >= len(V):
        raise MeshFormatError("face index out of range")
    if np.any((F[:, 0] == F[:, 1]) | (F[:, 1] == F[:, 2]) | (F[:, 0] == F[:, 2])):
        raise MeshFormatError("face with repeated vertex")
    areas = triangle_areas(V, F)
    scale = max(float(np.max(areas)), 1e-300)
    if np.any(areas <= AREA_EPS * scale):
        raise MeshFormatError(f"{int(np.sum(areas <= AREA_EPS * scale))} degenerate (zero-area) faces")
    _check_vertex_fans(F, len(V))
    F = _orient(F)
    loops = _boundary_loops(F)
    n_edges = len({(min(u, v), max(u, v)) for a, b, c in F for u, v in ((a, b), (b, c), (c, a))})
    chi = len(V) - n_edges + len(F)
    if len(loops) != 1 or chi != 1:
        raise TopologyError(
            f"mesh is not a topological disk: Euler characteristic {chi}, "
            f"{len(loops)} boundary loop(s)",
            euler_characteristic=chi, boundary_loops=len(loops))
    return SurfaceMesh(V, F, np.asarray(loops[0], dtype=np.int64))


# ------------------------------------------------------------------- file io

def _fan(poly):
    return [(poly[0], poly[k], poly[k + 1]) for k in range(1, len(poly) - 1)]


def _parse_off(text: str):
    toks = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            toks.append(line.split())
    if not toks:
        raise MeshFormatError("empty OFF file")
    head = toks[0]
    if head[0].upper() != "OFF":
        raise MeshFormatError("missing OFF header")
    rest = toks[1:]
    if len(head) > 1:
        rest = [head[1:]] + rest
    try:
        nv, nf = int(rest[0][0]), int(rest[0][1])
        verts = [[float(x) for x in rest[1 + i][:3]] for i in range(nv)]
        faces = []
        for i in range(nf):
            row = rest[1 + nv + i]
            k = int(row[0])
            poly = [int(x) for x in row[1:1 + k]]
            if len(poly) != k or k < 3:
                raise MeshFormatError(f"bad face record {row}")
            faces.extend(_fan(poly))
    except (IndexError, ValueError) as exc:
        raise MeshFormatError(f"malformed OFF file: {exc}") from exc
    return verts, faces


def _parse_obj(text: str):
    verts, faces = [], []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
                if len(verts[-1]) != 3:
                    raise ValueError("vertex needs three coordinates")
            elif parts[0] == "f":
                poly = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                if len(poly) < 3 or min(poly) < 0:
                    raise ValueError("face needs at least three 1-based indices")
                faces.extend(_fan(poly))
        except ValueError as exc:
            raise MeshFormatError(f"line {n}: {exc}") from exc
    if not verts or not faces:
        raise MeshFormatError("OBJ file has no vertices or faces")
    return verts, faces


def load_mesh(path, format: str | None = None) -> SurfaceMesh:
    """Read an ASCII OFF or OBJ file (polygons are fan-triangulated)."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    text = path.read_text()
    if fmt == "OFF":
        v, f = _parse_off(text)
    elif fmt == "OBJ":
        v, f = _parse_obj(text)
    else:
        raise MeshFormatError(f"unknown mesh format {fmt!r}")
    return make_mesh(v, f)


def write_obj(path, vertices, faces) -> None:
    lines = [f"v {float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in np.asarray(vertices, dtype=float)]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(faces)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_off(path, vertices, faces) -> None:
    V = np.asarray(vertices, dtype=float)
    F = np.asarray(faces)
    lines = ["OFF", f"{len(V)} {len(F)} 0"]
    lines += [f"{float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in V]
    lines += [f"3 {a} {b} {c}" for a, b, c in F]
    Path(path).write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------ mesh builders

def _ring_counts(K: int) -> list[int]:
    return [1] + [6 * k for k in range(1, K + 1)]


def _zipper(inner: list[int], inner_ang, outer: list[int], outer_ang):
    """Triangulate the band between two concentric rings (CCW faces)."""
    faces = []
    if len(inner) == 1:
        c = inner[0]
        for k in range(len(outer)):
            faces.append((c, outer[k], outer[(k + 1) % len(outer)]))
        return faces
    i = j = 0
    ni, no = len(inner), len(outer)
    while i < ni or j < no:
        a_next = inner_ang[i + 1] if i < ni else math.inf
        b_next = outer_ang[j + 1] if j < no else math.inf
        if j < no and (b_next <= a_next or i >= ni):
            faces.append((inner[i % ni], outer[j % no], outer[(j + 1) % no]))
            j += 1
        else:
            faces.append((inner[i % ni], outer[(j) % no], inner[(i + 1) % ni]))
            i += 1
    return faces


def _polar_mesh(K: int):
    if K < 1:
        raise MeshFormatError("K must be positive")
    idx = 0
    rings, angles = [], []
    for k, c in enumerate(_ring_counts(K)):
        rings.append(list(range(idx, idx + c)))
        # stagger alternate rings by half a step
        off = 0.0 if c == 1 else (math.pi / c if k % 2 else 0.0)
        ang = off + 2.0 * math.pi * np.arange(c) / c
        angles.append(np.append(ang, ang[0] + 2.0 * math.pi) if c > 1 else ang)
        idx += c
    faces = []
    for k in range(1, K + 1):
        faces += _zipper(rings[k - 1], angles[k - 1], rings[k], angles[k])
    return rings, angles, faces


def disk_mesh(K: int = 8) -> SurfaceMesh:
    """Planar unit disk: centre plus ``K`` rings of ``6k`` vertices."""
    rings, angles, faces = _polar_mesh(K)
    verts = []
    for k, (ring, ang) in enumerate(zip(rings, angles)):
        r = k / K
        for a in ang[: len(ring)]:
            verts.append((r * math.cos(a), r * math.sin(a), 0.0))
    return make_mesh(verts, faces)


def hemisphere_mesh(K: int = 8) -> SurfaceMesh:
    """Unit upper hemisphere, rings at equal polar-angle steps; boundary is the equator."""
    rings, angles, faces = _polar_mesh(K)
    verts = []
    for k, (ring, ang) in enumerate(zip(rings, angles)):
        phi = 0.5 * math.pi * k / K
        for a in ang[: len(ring)]:
            verts.append((math.sin(phi) * math.cos(a), math.sin(phi) * math.sin(a), math.cos(phi)))
    return make_mesh(verts, faces)


def fan_mesh(n: int) -> SurfaceMesh:
    """Regular ``n``-gon split into ``n`` triangles around its centre."""
    if n < 3:
        raise MeshFormatError("a fan needs at least 3 boundary vertices")
    verts = [(0.0, 0.0, 0.0)] + [(math.cos(2 * math.pi * k / n), math.sin(2 * math.pi * k / n), 0.0)
                                 for k in range(n)]
    faces = [(0, 1 + k, 1 + (k + 1) % n) for k in range(n)]
    return make_mesh(verts, faces)


# -------------------------------------------------------------- flattening

def cotangent_laplacian(V: np.ndarray, F: np.ndarray) -> sparse.csr_matrix:
    """Positive semidefinite ``L = D - W`` with ``w_ij = (cot a + cot b) / 2``."""
    n = len(V)
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, o = F[:, k], F[:, (k + 1) % 3], F[:, (k + 2) % 3]
        u = V[i] - V[o]
        w = V[j] - V[o]
        cross = np.cross(u, w) if V.shape[1] == 3 else (u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0])
        sn = np.linalg.norm(cross, axis=-1) if cross.ndim == 2 else np.abs(cross)
        cot = np.einsum("ij,ij->i", u, w) / sn
        rows += [i, j]
        cols += [j, i]
        vals += [-0.5 * cot, -0.5 * cot]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    W = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    d = -np.asarray(W.sum(axis=1)).ravel()
    return (W + sparse.diags(d)).tocsr()


def _boundary_angles(V, loop) -> np.ndarray:
    p = V[loop]
    seg = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    return 2.0 * math.pi * s / seg.sum()


class _HarmonicSolver:
    def __init__(self, L: sparse.csr_matrix, boundary: np.ndarray):
        n = L.shape[0]
        self.b = boundary
        mask = np.ones(n, dtype=bool)
        mask[boundary] = False
        self.inner = np.flatnonzero(mask)
        self.L = L
        self.L_ib = L[self.inner][:, boundary]
        self.n = n
        if len(self.inner):
            try:
                self.lu = splu(L[self.inner][:, self.inner].tocsc())
            except RuntimeError as exc:
                raise ConvergenceError(f"harmonic system is singular: {exc}") from exc

    def solve(self, zb: np.ndarray) -> np.ndarray:
        z = np.empty(self.n, dtype=complex)
        z[self.b] = zb
        if len(self.inner):
            rhs = -(self.L_ib @ zb)
            z[self.inner] = self.lu.solve(rhs.real) + 1j * self.lu.solve(rhs.imag)
        return z


def conformal_energy(L, z: np.ndarray, F: np.ndarray) -> float:
    """``E_D - A``: cotangent Dirichlet energy minus signed image area."""
    ed = 0.5 * float(np.real(np.vdot(z, L @ z)))
    p = z[F]
    area = 0.5 * np.sum(np.imag(np.conj(p[:, 1] - p[:, 0]) * (p[:, 2] - p[:, 0])))
    return ed - float(area)


def _relax_boundary(solver: _HarmonicSolver, L, F, theta, max_steps=200, rtol=1e-10):
    """Gradient descent on boundary angles for the conformal energy."""
    b = solver.b

    def state(th):
        z = solver.solve(np.exp(1j * th))
        return z, conformal_energy(L, z, F)

    z, E = state(theta)
    E0 = E
    step = 1.0
    for _ in range(max_steps):
        gz = L @ z
        zb = z[b]
        ga = -0.5j * (np.roll(zb, -1) - np.roll(zb, 1))
        g = gz[b] - ga
        dth = np.real(np.conj(g) * 1j * zb)
        dth -= dth.mean()
        gn = float(np.dot(dth, dth))
        if gn == 0.0:
            break
        accepted = False
        while step > 1e-12:
            th = theta - step * dth
            d = np.diff(np.append(th, th[0] + 2.0 * math.pi))
            if np.all(d > 0):
                z2, E2 = state(th)
                if E2 < E - 1e-4 * step * gn:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        decrease = E - E2
        theta, z, E = th, z2, E2
        step *= 2.0
        if decrease <= rtol * max(E0, 1e-300):
            break
    return theta, z, E


@dataclass(frozen=True, eq=False)
class FlatteningResult:
    """Flattened mesh and its conformal density.

    ``disk_positions`` holds the complex image of every vertex (boundary
    vertices on the unit circle); ``quality`` summarises per-face
    quasi-conformal distortion ``sigma_max / sigma_min`` of the map.
    """

    mesh: SurfaceMesh
    disk_positions: np.ndarray
    density: ConformalDensity
    quality: dict
    transform: MobiusTransform = field(default_factory=MobiusTransform.identity)

    def write_obj(self, path) -> None:
        z = self.disk_positions
        write_obj(path, np.column_stack([z.real, z.imag, np.zeros(len(z))]), self.mesh.faces)


def vertex_areas(V: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Barycentric cell areas (a third of every incident face)."""
    A = triangle_areas(V, F)
    out = np.zeros(len(V))
    for k in range(3):
        np.add.at(out, F[:, k], A / 3.0)
    return out


def distortion_report(mesh: SurfaceMesh, z: np.ndarray, energy: float | None = None) -> dict:
    V, F = mesh.vertices, mesh.faces
    p = V[F]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    l1 = np.linalg.norm(e1, axis=1)
    ax = e1 / l1[:, None]
    nrm = np.cross(e1, e2)
    ay = np.cross(nrm / np.linalg.norm(nrm, axis=1)[:, None], ax)
    P = np.stack([np.stack([l1, np.zeros_like(l1)], 1),
                  np.stack([np.einsum("ij,ij->i", e2, ax), np.einsum("ij,ij->i", e2, ay)], 1)], 2)
    q = z[F]
    d1, d2 = q[:, 1] - q[:, 0], q[:, 2] - q[:, 0]
    Q = np.stack([np.stack([d1.real, d1.imag], 1), np.stack([d2.real, d2.imag], 1)], 2)
    J = Q @ np.linalg.inv(P)
    s = np.linalg.svd(J, compute_uv=False)
    ratio = s[:, 0] / np.maximum(s[:, 1], 1e-300)
    flipped = int(np.sum(np.linalg.det(J) <= 0))
    rep = {
        "qc_mean": float(ratio.mean()),
        "qc_median": float(np.median(ratio)),
        "qc_p95": float(np.percentile(ratio, 95)),
        "qc_max": float(ratio.max()),
        "flipped": flipped,
        "n_faces": int(len(F)),
    }
    if energy is not None:
        rep["conformal_energy"] = float(energy)
    return rep


def flatten_to_disk(mesh: SurfaceMesh, relax: bool = True, interp: str = "pwl-decay") -> FlatteningResult:
    """Approximate conformal map of a disk-type mesh onto the unit disk.

    Parameters
    ----------
    mesh : SurfaceMesh
    relax : bool
        Run the corrective boundary pass. It is kept only if it lowers the
        conformal energy.
    interp : str
        Interpolation rule of the resulting density.

    Returns
    -------
    FlatteningResult
        Density samples at every vertex with ``mass_i = A(i) / A_total`` and
        ``mu_i = mass_i / A_flat(i) * (1 - |z_i|^2)^2``.
    """
    V, F, b = mesh.vertices, mesh.faces, mesh.boundary
    L = cotangent_laplacian(V, F)
    solver = _HarmonicSolver(L, b)
    theta0 = _boundary_angles(V, b)
    z = solver.solve(np.exp(1j * theta0))
    E = conformal_energy(L, z, F)
    # face orientation may induce a clockwise boundary: mirror to keep faces positive
    if E > 0 and _signed_area(z, F) < 0:
        theta0 = -theta0
        z = solver.solve(np.exp(1j * theta0))
        E = conformal_energy(L, z, F)
    E_harmonic = E
    relaxed = False
    if relax and len(b) > 3:
        th, z2, E2 = _relax_boundary(solver, L, F, theta0)
        if E2 < E:
            z, E, relaxed = z2, E2, True
    mass = vertex_areas(V, F)
    mass /= mass.sum()
    flat = vertex_areas(np.column_stack([z.real, z.imag]), F)
    tilde = mass / flat
    zc = z.copy()
    r = np.abs(zc)
    clamp = r > 1.0 - 1e-6
    zc[clamp] *= (1.0 - 1e-6) / r[clamp]
    mu = tilde * (1.0 - np.abs(zc) ** 2) ** 2
    quality = distortion_report(mesh, z, E)
    quality.update({"harmonic_energy": float(E_harmonic), "relaxed": relaxed})
    meta = {"source": "flatten", "n_vertices": int(len(V)), "n_faces": int(len(F)),
            "clamped": int(clamp.sum()), "flipped": quality["flipped"]}
    dens = ConformalDensity(zc, mu, mass, interp=interp, meta=meta)
    return FlatteningResult(mesh, z, dens, quality)


def _signed_area(z, F) -> float:
    p = z[F]
    return 0.5 * float(np.sum(np.imag(np.conj(p[:, 1] - p[:, 0]) * (p[:, 2] - p[:, 0]))))


def mobius_normalize(result: FlatteningResult, tol: float = 1e-12,
                     max_iter: int = 1000) -> FlatteningResult:
    """Move the mass-weighted hyperbolic median of the density to the origin."""
    d = result.density
    c = hyperbolic_median(d.points, d.mass, tol, max_iter)
    m = MobiusTransform(c, 0.0)
    z = m(result.disk_positions)
    dens = push_forward(d, m)
    meta = {**dens.meta, "normalized_center": [c.real, c.imag]}
    dens = dens.with_samples(meta=meta)
    return FlatteningResult(result.mesh, z, dens, distortion_report(result.mesh, z, result.quality.get("conformal_energy")),
                            m.compose(result.transform))
