"""Exact discrete optimal transport.

``solve_transport`` is a transportation-problem network simplex (MODI form):
northwest-corner start, potentials from the basis tree, Dantzig pricing with
a switch to Bland's rule during runs of degenerate pivots. The returned plan
carries the dual potentials, which certify optimality.
"""

from __future__ import annotations

import dataclasses
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment

from .density import ConformalDensity
from .errors import ConvergenceError, InvalidInputError
from .localcost import CostConfig, CostMatrix, cost_matrix

PIVOT_TOL = 1e-11
DUAL_TOL = 1e-9
MASS_TOL = 1e-9
DEGENERATE_RUN = 50


@dataclass(frozen=True, eq=False)
class TransportProblem:
    cost: np.ndarray
    row_masses: np.ndarray
    col_masses: np.ndarray

    def __init__(self, cost, row_masses=None, col_masses=None):
        if isinstance(cost, CostMatrix):
            cost = cost.values
        C = np.array(cost, dtype=float)
        if C.ndim != 2 or C.shape[0] == 0 or C.shape[1] == 0:
            raise InvalidInputError("cost must be a nonempty 2-d matrix")
        if not np.all(np.isfinite(C)):
            raise InvalidInputError("cost contains NaN or infinite entries")
        if np.any(C < 0):
            raise InvalidInputError("cost must be nonnegative")
        n, m = C.shape
        a = np.full(n, 1.0 / n) if row_masses is None else np.array(row_masses, dtype=float)
        b = np.full(m, 1.0 / m) if col_masses is None else np.array(col_masses, dtype=float)
        if a.shape != (n,) or b.shape != (m,):
            raise InvalidInputError("mass vectors do not match the cost shape")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InvalidInputError("masses must be finite")
        if np.any(a < 0) or np.any(b < 0):
            raise InvalidInputError("masses must be nonnegative")
        if abs(a.sum() - b.sum()) > MASS_TOL:
            raise InvalidInputError(f"unbalanced masses: {a.sum()!r} vs {b.sum()!r}")
        for x in (C, a, b):
            x.setflags(write=False)
        object.__setattr__(self, "cost", C)
        object.__setattr__(self, "row_masses", a)
        object.__setattr__(self, "col_masses", b)

    @property
    def shape(self):
        return self.cost.shape

    @property
    def is_uniform_square(self) -> bool:
        n, m = self.shape
        return (n == m and np.allclose(self.row_masses, 1.0 / n, rtol=0, atol=1e-15)
                and np.allclose(self.col_masses, 1.0 / n, rtol=0, atol=1e-15))


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Optimal coupling.

    ``coupling`` is a sparse ``n x m`` array; ``u`` and ``v`` are dual
    potentials with ``cost - u[:, None] - v[None, :] >= 0`` up to round-off.
    ``meta`` holds provenance such as support indices; ``cost`` optionally
    keeps the cost matrix the plan was solved for.
    """

    coupling: sparse.csr_array
    objective: float
    is_permutation: bool
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)
    cost: CostMatrix | None = None

    @property
    def shape(self):
        return self.coupling.shape

    def dense(self) -> np.ndarray:
        return self.coupling.toarray()

    def triplets(self) -> list[tuple[int, int, float]]:
        c = self.coupling.tocoo()
        order = np.lexsort((c.col, c.row))
        return [(int(c.row[k]), int(c.col[k]), float(c.data[k])) for k in order]

    def permutation(self) -> np.ndarray | None:
        """Target index for each source when the plan is a permutation."""
        if not self.is_permutation:
            return None
        perm = np.empty(self.shape[0], dtype=int)
        for i, j, _ in self.triplets():
            perm[i] = j
        return perm

    def to_json(self) -> str:
        doc = {
            "shape": list(self.shape),
            "objective": float(self.objective),
            "is_permutation": bool(self.is_permutation),
            "triplets": [[i, j, w] for i, j, w in self.triplets()],
            "meta": self.meta,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "TransportPlan":
        doc = json.loads(text)
        trip = doc.get("triplets", [])
        rows = [int(t[0]) for t in trip]
        cols = [int(t[1]) for t in trip]
        vals = [float(t[2]) for t in trip]
        coup = sparse.csr_array((vals, (rows, cols)), shape=tuple(doc["shape"]))
        return cls(coup, float(doc["objective"]), bool(doc["is_permutation"]),
                   meta=doc.get("meta") or {})

    def to_csv(self) -> str:
        return correspondence_csv(self)


def correspondence_csv(plan: TransportPlan) -> str:
    lines = ["source,target,mass"]
    lines += [f"{i},{j},{w!r}" for i, j, w in plan.triplets()]
    return "\n".join(lines) + "\n"


def _check_permutation(X: np.ndarray) -> bool:
    n, m = X.shape
    if n != m:
        return False
    nz = X > 1e-9
    if not (np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1)):
        return False
    return bool(np.all(np.abs(X[nz] - 1.0 / n) <= 1e-9))


def _make_plan(X: np.ndarray, C: np.ndarray, u=None, v=None, meta=None) -> TransportPlan:
    X = np.where(X > 0, X, 0.0)
    obj = float(np.sum(X * C))
    return TransportPlan(sparse.csr_array(X), obj, _check_permutation(X), u, v, dict(meta or {}))


def _northwest(a: np.ndarray, b: np.ndarray):
    n, m = len(a), len(b)
    ra = a.astype(float).copy()
    rb = b.astype(float).copy()
    basis = []
    flow = {}
    i = j = 0
    while True:
        x = min(ra[i], rb[j])
        basis.append((i, j))
        flow[(i, j)] = x
        ra[i] -= x
        rb[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if j == m - 1 or (i < n - 1 and ra[i] <= rb[j]):
            i += 1
        else:
            j += 1
    return basis, flow


def _tree_path(adj_r, adj_c, i0: int, j0: int):
    """Alternating path row i0 -> ... -> column j0 in the basis tree.

    Returns the list of basic cells along the path, starting with the cell
    incident to row ``i0``.
    """
    # nodes: rows as ("r", i), columns as ("c", j)
    prev: dict = {("r", i0): None}
    q = deque([("r", i0)])
    target = ("c", j0)
    while q:
        node = q.popleft()
        if node == target:
            break
        kind, idx = node
        nbrs = (("c", j) for j in adj_r[idx]) if kind == "r" else (("r", i) for i in adj_c[idx])
        for nb in nbrs:
            if nb not in prev:
                prev[nb] = node
                q.append(nb)
    if target not in prev:
        raise ConvergenceError("basis is not a spanning tree")
    cells = []
    node = target
    while prev[node] is not None:
        p = prev[node]
        cell = (p[1], node[1]) if p[0] == "r" else (node[1], p[1])
        cells.append(cell)
        node = p
    cells.reverse()
    return cells


def _potentials(C, adj_r, adj_c, n, m):
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[0] = 0.0
    q = deque([("r", 0)])
    while q:
        kind, idx = q.popleft()
        if kind == "r":
            for j in adj_r[idx]:
                if np.isnan(v[j]):
                    v[j] = C[idx, j] - u[idx]
                    q.append(("c", j))
        else:
            for i in adj_c[idx]:
                if np.isnan(u[i]):
                    u[i] = C[i, idx] - v[idx]
                    q.append(("r", i))
    return u, v


def solve_transport(p: TransportProblem, max_iter: int | None = None) -> TransportPlan:
    """Optimal basic solution of the transportation LP by network simplex."""
    C = p.cost
    a, b = p.row_masses, p.col_masses
    n, m = C.shape
    basis, flow = _northwest(a, b)
    adj_r = [set() for _ in range(n)]
    adj_c = [set() for _ in range(m)]
    for i, j in basis:
        adj_r[i].add(j)
        adj_c[j].add(i)
    max_iter = max_iter or 50 * (n + m) * max(n, m) + 1000
    degenerate = 0
    scale = max(1.0, float(np.max(np.abs(C))))
    it = 0
    while True:
        u, v = _potentials(C, adj_r, adj_c, n, m)
        red = C - u[:, None] - v[None, :]
        if degenerate < DEGENERATE_RUN:
            flat = int(np.argmin(red))
            if red.flat[flat] >= -PIVOT_TOL * scale:
                break
        else:
            # Bland: lowest-index improving cell
            neg = np.flatnonzero(red.ravel() < -PIVOT_TOL * scale)
            if len(neg) == 0:
                break
            flat = int(neg[0])
        i0, j0 = divmod(flat, m)
        it += 1
        if it > max_iter:
            raise ConvergenceError(f"network simplex exceeded {max_iter} pivots")
        path = _tree_path(adj_r, adj_c, i0, j0)
        # cells on the path alternate -, +, -, ... starting next to row i0
        minus = path[0::2]
        plus = path[1::2]
        theta = min(flow[c] for c in minus)
        cands = [c for c in minus if flow[c] <= theta]
        leave = min(cands)  # deterministic tie-break
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[(i0, j0)] = theta
        del flow[leave]
        adj_r[leave[0]].discard(leave[1])
        adj_c[leave[1]].discard(leave[0])
        adj_r[i0].add(j0)
        adj_c[j0].add(i0)
        degenerate = degenerate + 1 if theta <= 0.0 else 0
    X = np.zeros((n, m))
    for (i, j), x in flow.items():
        X[i, j] = max(x, 0.0)
    plan = _make_plan(X, C, u, v, {"solver": "network-simplex", "pivots": it})
    return plan


def dual_certificate(plan: TransportPlan, cost) -> float:
    """Most negative reduced cost of the plan's potentials (>= -1e-9 when optimal)."""
    C = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=float)
    if plan.u is None or plan.v is None:
        raise InvalidInputError("plan has no dual potentials")
    return float(np.min(C - plan.u[:, None] - plan.v[None, :]))


def solve_assignment(cost) -> tuple[np.ndarray, float]:
    """Minimum-cost permutation of a square matrix.

    Returns ``(perm, objective)`` where ``perm[i]`` is the column matched to
    row ``i`` and ``objective = sum_i cost[i, perm[i]]``.
    """
    if isinstance(cost, CostMatrix):
        cost = cost.values
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise InvalidInputError(f"assignment needs a square matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise InvalidInputError("cost contains NaN or infinite entries")
    rows, cols = linear_sum_assignment(C)
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm, float(C[rows, cols].sum())


def assignment_plan(cost) -> TransportPlan:
    """Uniform-mass plan from :func:`solve_assignment`, objective scaled by ``1/n``."""
    C = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=float)
    perm, _ = solve_assignment(C)
    n = len(perm)
    X = np.zeros_like(C)
    X[np.arange(n), perm] = 1.0 / n
    return _make_plan(X, C, meta={"solver": "assignment"})


def solve(p: TransportProblem) -> TransportPlan:
    """Assignment for uniform square problems, network simplex otherwise."""
    if p.is_uniform_square:
        return assignment_plan(p.cost)
    return solve_transport(p)


def subsample(d: ConformalDensity, k: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Mass-stratified systematic subsample of sample indices.

    ``k`` equally spaced positions (random common offset) are placed on the
    cumulative mass; samples hit more than once are merged, so the returned
    masses are multiples of ``1/k`` summing to one.
    """
    n = len(d)
    if k >= n:
        return np.arange(n), np.asarray(d.mass, dtype=float)
    if k < 1:
        raise InvalidInputError("subsample size must be positive")
    rng = np.random.default_rng(seed)
    pos = (rng.uniform() + np.arange(k)) / k
    cum = np.cumsum(d.mass)
    cum[-1] = max(cum[-1], 1.0)
    idx = np.minimum(np.searchsorted(cum, pos, side="right"), n - 1)
    uniq, counts = np.unique(idx, return_counts=True)
    return uniq, counts / k


def generalized_distance(mu: ConformalDensity, nu: ConformalDensity,
                         cfg: CostConfig | None = None, n_points: int | None = None,
                         seed: int = 0, workers: int | None = None):
    """Kantorovich distance with the local cost as ground cost.

    Parameters
    ----------
    mu, nu : ConformalDensity
    cfg : CostConfig
    n_points : int, optional
        Support size per density. Densities with more samples are reduced by
        :func:`subsample`; by default every sample is used.
    seed : int
        Seed of the subsampling offset. Both densities use the same offset,
        so densities with equal mass vectors get corresponding supports.

    Returns
    -------
    distance : float
    plan : TransportPlan
        ``meta`` records the support indices and the cost matrix.
    """
    cfg = cfg or CostConfig()
    k = n_points or max(len(mu), len(nu))
    ri, ra = subsample(mu, k, seed)
    ci, ca = subsample(nu, k, seed)
    C = cost_matrix(mu, nu, mu.points[ri], nu.points[ci], cfg, workers)
    plan = solve(TransportProblem(C, ra, ca))
    meta = {**plan.meta, "row_support": ri.tolist(), "col_support": ci.tolist()}
    plan = dataclasses.replace(plan, meta=meta, cost=C)
    return plan.objective, plan


def transport_distance(cost, row_masses=None, col_masses=None) -> float:
    return solve(TransportProblem(cost, row_masses, col_masses)).objective


def objective_of(plan: TransportPlan, cost) -> float:
    C = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=float)
    return float(math.fsum((plan.dense() * C).ravel()))
