"""Compiled inner loops: density interpolation and local-cost minimisation.

Samples are lifted to the hyperboloid ``X = (1+|z|^2, 2x, 2y) / (1-|z|^2)``
where disk isometries act linearly. Triangles are stored in Klein
coordinates ``X[1:] / X[0]`` (straight geodesics), located through a
uniform bucket grid, and interpolated with weights proportional to
``alpha_i / X0_i`` so that the interpolant commutes with every Mobius map.
"""

import math

import numpy as np
from numba import njit

MODE_PWL = 0
MODE_DECAY = 1

_EPS_BARY = 1e-12


@njit(cache=True, nogil=True)
def _locate(kx, ky, tri_org, tri_inv, cell_start, cell_tris, nb):
    cx = int((kx + 1.0) * 0.5 * nb)
    cy = int((ky + 1.0) * 0.5 * nb)
    if cx < 0:
        cx = 0
    elif cx >= nb:
        cx = nb - 1
    if cy < 0:
        cy = 0
    elif cy >= nb:
        cy = nb - 1
    c = cy * nb + cx
    for p in range(cell_start[c], cell_start[c + 1]):
        t = cell_tris[p]
        dx = kx - tri_org[t, 0]
        dy = ky - tri_org[t, 1]
        a1 = tri_inv[t, 0] * dx + tri_inv[t, 1] * dy
        a2 = tri_inv[t, 2] * dx + tri_inv[t, 3] * dy
        a0 = 1.0 - a1 - a2
        if a0 >= -_EPS_BARY and a1 >= -_EPS_BARY and a2 >= -_EPS_BARY:
            return t, max(a0, 0.0), max(a1, 0.0), max(a2, 0.0)
    return -1, 0.0, 0.0, 0.0


@njit(cache=True, nogil=True)
def _decay(c):
    # exp(-2 d) squared, where c = cosh(2 d) is the Minkowski product
    if c <= 1.0:
        return 1.0
    e = c - math.sqrt(c * c - 1.0)
    return e * e


@njit(cache=True, nogil=True)
def eval_point(x, y, X, mu, tri, tri_org, tri_inv, tri_gram,
               cell_start, cell_tris, nb, edges, edge_gram, mode):
    r2 = x * x + y * y
    s = 1.0 - r2
    q0 = (1.0 + r2) / s
    q1 = 2.0 * x / s
    q2 = 2.0 * y / s
    n = X.shape[0]
    if tri.shape[0] > 0:
        t, a0, a1, a2 = _locate(q1 / q0, q2 / q0, tri_org, tri_inv,
                                cell_start, cell_tris, nb)
        if t >= 0:
            i0 = tri[t, 0]
            i1 = tri[t, 1]
            i2 = tri[t, 2]
            b0 = a0 / X[i0, 0]
            b1 = a1 / X[i1, 0]
            b2 = a2 / X[i2, 0]
            sb = b0 + b1 + b2
            b0 /= sb
            b1 /= sb
            b2 /= sb
            return b0 * mu[i0] + b1 * mu[i1] + b2 * mu[i2]
    if mode == MODE_PWL or edges.shape[0] == 0:
        # hyperbolic nearest sample: smallest Minkowski product
        best = np.inf
        ib = 0
        for i in range(n):
            p = q0 * X[i, 0] - q1 * X[i, 1] - q2 * X[i, 2]
            if p < best:
                best = p
                ib = i
        if mode == MODE_PWL:
            return mu[ib]
        return mu[ib] * _decay(best)
    # decay mode: project onto the nearest hull edge, then damp by exp(-4 d_H)
    best = np.inf
    bval = 0.0
    for e in range(edges.shape[0]):
        i = edges[e, 0]
        j = edges[e, 1]
        g = edge_gram[e]
        pi = q0 * X[i, 0] - q1 * X[i, 1] - q2 * X[i, 2]
        pj = q0 * X[j, 0] - q1 * X[j, 1] - q2 * X[j, 2]
        det = 1.0 - g * g
        if det != 0.0:
            a = (pi - g * pj) / det
            b = (pj - g * pi) / det
        else:
            a = -1.0
            b = -1.0
        if a >= 0.0 and b >= 0.0 and a + b > 0.0:
            nrm2 = a * a + b * b + 2.0 * a * b * g
            ch = (a * pi + b * pj) / math.sqrt(nrm2)
            if ch < best:
                best = ch
                bval = (a * mu[i] + b * mu[j]) / (a + b)
        else:
            if pi <= pj:
                if pi < best:
                    best = pi
                    bval = mu[i]
            else:
                if pj < best:
                    best = pj
                    bval = mu[j]
    return bval * _decay(best)


@njit(cache=True, nogil=True)
def eval_many(zr, zi, X, mu, tri, tri_org, tri_inv, tri_gram,
              cell_start, cell_tris, nb, edges, edge_gram, mode):
    out = np.empty(zr.shape[0])
    for p in range(zr.shape[0]):
        out[p] = eval_point(zr[p], zi[p], X, mu, tri, tri_org, tri_inv, tri_gram,
                            cell_start, cell_tris, nb, edges, edge_gram, mode)
    return out


@njit(cache=True, nogil=True)
def profiles(cr, ci, radii, angles, X, mu, tri, tri_org, tri_inv, tri_gram,
             cell_start, cell_tris, nb, edges, edge_gram, mode):
    """Density sampled on the polar grid of each centre.

    ``out[p, k, l] = mu(from_origin(c_p, radii[k] * exp(i angles[l])))``.
    """
    npt = cr.shape[0]
    nr = radii.shape[0]
    na = angles.shape[0]
    out = np.empty((npt, nr, na))
    cosa = np.cos(angles)
    sina = np.sin(angles)
    for p in range(npt):
        wr = cr[p]
        wi = ci[p]
        for k in range(nr):
            for l in range(na):
                ur = radii[k] * cosa[l]
                ui = radii[k] * sina[l]
                # (u + c) / (1 + conj(c) u)
                nr_ = ur + wr
                ni_ = ui + wi
                dr = 1.0 + wr * ur + wi * ui
                di = wr * ui - wi * ur
                den = dr * dr + di * di
                x = (nr_ * dr + ni_ * di) / den
                y = (ni_ * dr - nr_ * di) / den
                out[p, k, l] = eval_point(x, y, X, mu, tri, tri_org, tri_inv, tri_gram,
                                          cell_start, cell_tris, nb, edges, edge_gram, mode)
    return out


@njit(cache=True, nogil=True, fastmath=True)
def _phi_shift(prof_a, prof_b, i, j, weights, lstep, pos):
    """Mismatch integral with the column profile rotated by ``pos`` fine steps.

    ``pos`` may be fractional; the column profile is then interpolated
    linearly in angle (the fractional part is the same for every node).
    """
    nr = prof_a.shape[1]
    na = prof_a.shape[2]
    L = prof_b.shape[2]
    base = math.floor(pos)
    f = pos - base
    g = 1.0 - f
    ib = int(base) % L
    if ib < 0:
        ib += L
    acc = 0.0
    for k in range(nr):
        pa = prof_a[i, k]
        pb = prof_b[j, k]
        tk = 0.0
        idx = ib
        if f == 0.0:
            for l in range(na):
                tk += abs(pa[l] - pb[idx])
                idx += lstep
                if idx >= L:
                    idx -= L
        else:
            for l in range(na):
                idx2 = idx + 1
                if idx2 == L:
                    idx2 = 0
                tk += abs(pa[l] - (g * pb[idx] + f * pb[idx2]))
                idx += lstep
                if idx >= L:
                    idx -= L
        acc += weights[k] * tk
    return acc


@njit(cache=True, nogil=True)
def cost_block(prof_a, prof_b, weights, n_grid, lstep, refine_tol, n_refine,
               out_val, out_alpha):
    """Minimise the mismatch integral over the circle of maps for every pair.

    ``prof_a[i]`` holds the row density on the quadrature grid around row
    centre ``i``; ``prof_b[j]`` the column density on ``L`` equispaced angles
    starting at the first quadrature angle, so that quadrature angle ``l``
    rotated by ``s`` fine steps sits at index ``l * lstep + s``. A coarse
    grid of ``n_grid`` rotations is scanned exactly. Golden-section search
    then refines the ``n_refine`` grid cells with the smallest endpoint sum:
    a shallow basin can hide between two grid points, so refining only
    around the best grid point is not enough.
    """
    n = prof_a.shape[0]
    m = prof_b.shape[0]
    L = prof_b.shape[2]
    sstep = L // n_grid
    h = 2.0 * math.pi / L
    tol = refine_tol / h
    grid = np.empty(n_grid)
    pair = np.empty(n_grid)
    for i in range(n):
        for j in range(m):
            best = np.inf
            bpos = 0.0
            for s in range(n_grid):
                v = _phi_shift(prof_a, prof_b, i, j, weights, lstep, float(s * sstep))
                grid[s] = v
                if v < best:
                    best = v
                    bpos = float(s * sstep)
            for s in range(n_grid):
                pair[s] = grid[s] + grid[(s + 1) % n_grid]
            order = np.argsort(pair)
            for r in range(min(n_refine, n_grid)):
                s = order[r]
                lo = float(s * sstep)
                v, p = _golden(prof_a, prof_b, i, j, weights, lstep, lo, lo + sstep, tol)
                if v < best:
                    best = v
                    bpos = p
            out_val[i, j] = best
            out_alpha[i, j] = (bpos * h) % (2.0 * math.pi)


@njit(cache=True, nogil=True)
def _golden(prof_a, prof_b, i, j, weights, lstep, lo, hi, tol):
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    best = np.inf
    bpos = lo
    x1 = hi - gr * (hi - lo)
    x2 = lo + gr * (hi - lo)
    f1 = _phi_shift(prof_a, prof_b, i, j, weights, lstep, x1)
    f2 = _phi_shift(prof_a, prof_b, i, j, weights, lstep, x2)
    while True:
        if f1 < best:
            best = f1
            bpos = x1
        if f2 < best:
            best = f2
            bpos = x2
        if hi - lo <= tol:
            break
        if f1 <= f2:
            hi = x2
            x2 = x1
            f2 = f1
            x1 = hi - gr * (hi - lo)
            f1 = _phi_shift(prof_a, prof_b, i, j, weights, lstep, x1)
        else:
            lo = x1
            x1 = x2
            f1 = f2
            x2 = lo + gr * (hi - lo)
            f2 = _phi_shift(prof_a, prof_b, i, j, weights, lstep, x2)
    return best, bpos


@njit(cache=True, nogil=True)
def grid_residuals(prof_a, prof_b, weights, n_grid, lstep):
    """Mismatch integrals for every pair and every coarse grid rotation."""
    n = prof_a.shape[0]
    m = prof_b.shape[0]
    sstep = prof_b.shape[2] // n_grid
    out = np.empty((n, m, n_grid))
    for i in range(n):
        for j in range(m):
            for s in range(n_grid):
                out[i, j, s] = _phi_shift(prof_a, prof_b, i, j, weights, lstep,
                                          float(s * sstep))
    return out
