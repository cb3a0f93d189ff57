import cmath
import json
import math

import numpy as np
import pytest

from cwass.density import ConformalDensity, push_forward, ring_layout, synthesize
from cwass.errors import InvalidInputError, InvalidParameterError
from cwass.hyperbolic import DiskPoint, MobiusTransform, interpolating_mobius
from cwass.localcost import (CostConfig, CostMatrix, boundary_limit_cost, cost_matrix,
                             fine_angular_count, local_cost, phi, phi_invariant_form,
                             symmetric_cost_matrix)

VOL_R1 = 4.33884684544285927191604537266  # pi sinh(1)^2, mpmath
VOL_R_HALF = 0.853069066321225576612089321575


@pytest.fixture(scope="module")
def pair():
    return synthesize("multi-bump", seed=21), synthesize("multi-bump", seed=22)


def constant(c, n=65):
    return ConformalDensity(ring_layout(n), np.full(n, float(c)))


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(R=0.0), dict(sigma_grid=4), dict(refine_tol=1.0),
                                    dict(quad_radial=0), dict(tol=0.0)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidParameterError):
            CostConfig(**kw)

    def test_roundtrip(self):
        c = CostConfig(R=0.7, sigma_grid=16)
        assert CostConfig.from_dict(json.loads(json.dumps(c.to_dict()))) == c
        assert c.volume == pytest.approx(math.pi * math.sinh(0.7) ** 2)

    def test_fine_count(self):
        assert fine_angular_count(256, 32) == 1536
        assert fine_angular_count(192, 32) == 1536
        L = fine_angular_count(48, 10)
        assert L % 48 == 0 and L % 10 == 0 and L >= 1536


class TestClosedForms:
    @pytest.mark.parametrize("R, vol", [(1.0, VOL_R1), (0.5, VOL_R_HALF)])
    def test_constant_densities(self, R, vol):
        v, _ = local_cost(constant(1.0), constant(2.0), 0j, 0j, CostConfig(R=R))
        assert v == pytest.approx(vol, rel=1e-6)

    def test_constant_offcentre_sigma_independent(self):
        cfg = CostConfig()
        a, b = constant(1.0), constant(3.0)
        for s in (1.0, 1j, cmath.exp(2.0j)):
            assert phi(a, b, 0.2, -0.1j, s, cfg) == pytest.approx(2 * VOL_R1, rel=1e-9)

    def test_identical_is_zero(self, pair):
        mu, _ = pair
        v, s = local_cost(mu, mu, 0.2 + 0.1j, 0.2 + 0.1j)
        assert v < 1e-9
        assert abs(s - 1.0) < 1e-3

    def test_reflexivity(self, pair):
        mu, _ = pair
        m = MobiusTransform(0.4 - 0.2j, 2.0)
        z = -0.1 + 0.3j
        v, s = local_cost(mu, push_forward(mu, m), z, m(z))
        assert v < 1e-3
        # the minimising sigma reproduces m itself
        mm = interpolating_mobius(z, m(z), s)
        assert abs(mm(0.05j) - m(0.05j)) < 1e-3


class TestPaths:
    def test_search_matches_direct_phi(self, pair):
        mu, nu = pair
        v, s = local_cost(mu, nu, 0.1, -0.2j)
        assert v == pytest.approx(phi(mu, nu, 0.1, -0.2j, s), abs=1e-6)

    def test_minimum_below_grid(self, pair):
        mu, nu = pair
        v, _ = local_cost(mu, nu, 0.3j, 0.1)
        grid = [phi(mu, nu, 0.3j, 0.1, cmath.exp(2j * math.pi * k / 64)) for k in range(64)]
        assert v <= min(grid) + 1e-6

    def test_invariant_form(self, pair):
        mu, nu = pair
        for s in (1.0, cmath.exp(1.2j)):
            a = phi(mu, nu, 0.1 + 0.1j, -0.3, s)
            b = phi_invariant_form(mu, nu, 0.1 + 0.1j, -0.3, s)
            assert a == pytest.approx(b, rel=1e-9)

    def test_invariant_form_needs_positive(self):
        zero = ConformalDensity([0.0, 0.5], [0.0, 0.0])
        with pytest.raises(InvalidInputError):
            phi_invariant_form(zero, zero, 0, 0, 1)

    def test_diskpoint_inputs(self, pair):
        mu, nu = pair
        assert local_cost(mu, nu, DiskPoint(0.1, 0), DiskPoint(0, 0.2))[0] == \
            local_cost(mu, nu, 0.1, 0.2j)[0]

    def test_sigma_grid_doubling(self, pair):
        mu, nu = pair
        a = local_cost(mu, nu, 0.2, 0.1j, CostConfig(sigma_grid=32))[0]
        b = local_cost(mu, nu, 0.2, 0.1j, CostConfig(sigma_grid=64))[0]
        assert abs(a - b) < 1e-4


class TestMatrix:
    def test_one_by_one_identical(self, pair):
        mu, _ = pair
        C = cost_matrix(mu, mu, [0.1j], [0.1j])
        assert C.shape == (1, 1) and C.values[0, 0] < 1e-9

    def test_diagonal_under_mobius(self, pair):
        mu, _ = pair
        m = MobiusTransform(0.3, 0.5)
        pts = mu.points[::8]
        C = cost_matrix(mu, push_forward(mu, m), pts, m(pts))
        assert np.max(np.diag(C.values)) < 1e-3
        assert np.all(C.values >= 0)

    def test_transpose(self, pair):
        mu, nu = pair
        P, Q = mu.points[:6], nu.points[3:8]
        A = cost_matrix(mu, nu, P, Q)
        B = cost_matrix(nu, mu, Q, P)
        assert np.max(np.abs(A.values - B.values.T)) < 1e-3
        avg, asym = symmetric_cost_matrix(mu, nu, P, Q)
        assert asym < 1e-3 and np.allclose(avg, 0.5 * (A.values + B.values.T))

    def test_worker_independent(self, pair):
        mu, nu = pair
        a = cost_matrix(mu, nu, mu.points[:9], nu.points[:7], workers=1)
        b = cost_matrix(mu, nu, mu.points[:9], nu.points[:7], workers=3)
        assert np.array_equal(a.values, b.values)

    def test_serialization(self, pair):
        mu, nu = pair
        C = cost_matrix(mu, nu, mu.points[:3], nu.points[:2])
        back = CostMatrix.from_json(C.to_json())
        assert np.array_equal(back.values, C.values)
        assert np.array_equal(back.row_points, C.row_points)
        assert back.config == C.config
        assert np.allclose(np.abs(back.argmin_sigma), 1.0)
        rows = C.to_csv().strip().split("\n")
        assert len(rows) == 3 and len(rows[0].split(",")) == 2

    def test_rejects_bad_points(self, pair):
        mu, nu = pair
        with pytest.raises(InvalidInputError):
            cost_matrix(mu, nu, [1.0], [0.0])
        with pytest.raises(InvalidInputError):
            cost_matrix(mu, nu, [], [0.0])


class TestBoundaryLimit:
    def test_zero_and_constant(self):
        assert boundary_limit_cost(0.2, constant(0.0)) == 0.0
        assert boundary_limit_cost(0.2, constant(1.5)) == pytest.approx(1.5 * VOL_R1, rel=1e-9)

    def test_limit_approached(self):
        # xi vanishes towards the circle like every hyperbolic density of a compact surface
        xi = synthesize("flat-disk", n=257)
        zeta = synthesize("multi-bump", seed=4, n=257)
        wp = 0.1 - 0.2j
        target = boundary_limit_cost(wp, zeta)
        gaps = [abs(local_cost(xi, zeta, r, wp)[0] - target) for r in (0.9, 0.99, 0.999)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 0.02 * target
