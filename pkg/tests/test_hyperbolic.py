import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cwass.errors import InvalidParameterError
from cwass.hyperbolic import (BoundaryPoint, DiskPoint, MobiusTransform, from_origin, geodesic_disk,
                              geodesic_volume, hyperbolic_distance, hyperbolic_quadrature,
                              interpolating_mobius, mobius_apply, mobius_compose, mobius_inverse,
                              quadrature_rule, to_origin)

# closed forms evaluated with mpmath at 30 digits
TANH_1 = 0.761594155955764888119458282605
ATANH_HALF = 0.549306144334054845697622618461
VOL_R1 = 4.33884684544285927191604537266
VOL_R_HALF = 0.853069066321225576612089321575
DIST_PAIR = 0.645106403444292623686412421337  # d(0.3+0.4i, -0.2+0.1i)
GAUSS_R1 = 3.03089152264915913895117938432  # int over Omega(0,1) of exp(-|z|^2) dvol_H


def disk_points(r_max=0.95):
    return st.builds(lambda r, t: cmath.rect(r, t),
                     st.floats(0.0, r_max), st.floats(0.0, 2 * math.pi))


mobius = st.builds(lambda a, t: MobiusTransform(a, t), disk_points(0.9), st.floats(0.0, 2 * math.pi))


class TestPoints:
    def test_disk_point_rejects_near_boundary(self):
        with pytest.raises(InvalidParameterError):
            DiskPoint(1.0, 0.0)
        with pytest.raises(InvalidParameterError):
            DiskPoint.from_complex(1.0 - 1e-10)
        assert DiskPoint.from_complex(0.3 + 0.1j).z == 0.3 + 0.1j

    def test_boundary_angle_normalized(self):
        b = BoundaryPoint(-math.pi / 2)
        assert 0.0 <= b.angle < 2 * math.pi
        assert abs(b.z - (-1j)) < 1e-15


class TestMobius:
    def test_formula_examples(self):
        assert abs(mobius_apply(MobiusTransform(0.5, 0.0), DiskPoint(0.5, 0.0)).z) < 1e-15
        assert mobius_apply(MobiusTransform(), DiskPoint(0.3, 0.1)).z == pytest.approx(0.3 + 0.1j)
        w = mobius_apply(MobiusTransform(0.3, math.pi / 2), DiskPoint(0.0, 0.0)).z
        assert abs(w - (-0.3j)) < 1e-15

    def test_inverse_examples(self):
        assert mobius_inverse(MobiusTransform.identity()).params() == (0.0, 0.0, 0.0)
        assert abs(mobius_inverse(MobiusTransform(0.5, 0.0))(0j) - 0.5) < 1e-15

    def test_rejects_a_outside(self):
        with pytest.raises(InvalidParameterError):
            MobiusTransform(1.0, 0.0)

    @given(mobius, mobius, disk_points())
    def test_compose(self, m1, m2, z):
        assert abs(mobius_compose(m1, m2)(z) - m1(m2(z))) < 1e-12

    @given(mobius, st.lists(disk_points(), min_size=10, max_size=10))
    def test_inverse_roundtrip(self, m, zs):
        z = np.array(zs)
        assert np.max(np.abs(mobius_compose(m, mobius_inverse(m))(z) - z)) < 1e-12

    @given(mobius, mobius, mobius, disk_points())
    def test_associative(self, a, b, c, z):
        lhs = mobius_compose(mobius_compose(a, b), c)
        rhs = mobius_compose(a, mobius_compose(b, c))
        assert abs(lhs(z) - rhs(z)) < 1e-12

    @given(mobius, disk_points())
    def test_isometry_identity(self, m, z):
        lhs = abs(m.derivative(z)) ** 2 / (1 - abs(m(z)) ** 2) ** 2
        rhs = 1.0 / (1 - abs(z) ** 2) ** 2
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_theta_canonical(self):
        m = MobiusTransform(0.1, 7.0)
        assert 0.0 <= m.theta < 2 * math.pi
        assert m.theta == pytest.approx(7.0 - 2 * math.pi)

    def test_matrix_matches_action(self):
        m = MobiusTransform(0.2 - 0.3j, 1.1)
        (p, q), (r, s) = m.matrix()
        z = 0.1 + 0.4j
        assert abs((p * z + q) / (r * z + s) - m(z)) < 1e-14


class TestDistance:
    def test_closed_form(self):
        assert hyperbolic_distance(DiskPoint(0, 0), DiskPoint(0.5, 0)) == pytest.approx(ATANH_HALF, abs=1e-15)
        assert hyperbolic_distance(0.3 + 0.4j, -0.2 + 0.1j) == pytest.approx(DIST_PAIR, abs=1e-14)
        assert hyperbolic_distance(0.2j, 0.2j) == 0.0

    @given(disk_points(), disk_points())
    def test_symmetric(self, z, w):
        assert hyperbolic_distance(z, w) == pytest.approx(hyperbolic_distance(w, z), abs=1e-12)

    @given(mobius, disk_points(0.9), disk_points(0.9))
    def test_invariant(self, m, z, w):
        assert hyperbolic_distance(m(z), m(w)) == pytest.approx(hyperbolic_distance(z, w), abs=1e-10)

    @given(disk_points(0.8), disk_points(0.8), disk_points(0.8))
    def test_triangle(self, x, y, z):
        assert hyperbolic_distance(x, z) <= hyperbolic_distance(x, y) + hyperbolic_distance(y, z) + 1e-12

    def test_origin_maps(self):
        z0 = 0.3 - 0.2j
        assert abs(to_origin(z0)(z0)) < 1e-15
        assert abs(from_origin(z0, 0j) - z0) < 1e-15
        u = 0.1 + 0.5j
        assert abs(to_origin(z0)(from_origin(z0, u)) - u) < 1e-14


class TestGeodesicDisk:
    def test_centred_radius(self):
        c, r = geodesic_disk(DiskPoint(0, 0), 1.0).euclidean_circle()
        assert c == 0j
        assert r == pytest.approx(TANH_1, abs=1e-15)

    def test_invalid_radius(self):
        with pytest.raises(InvalidParameterError):
            geodesic_disk(0j, 0.0)

    def test_centre_member(self):
        assert geodesic_disk(0.7 + 0.2j, 0.01).contains(0.7 + 0.2j)

    def test_transport_of_disks(self):
        rng = np.random.default_rng(5)
        z, w = 0.4 + 0.1j, -0.3 + 0.5j
        m = interpolating_mobius(z, w, cmath.exp(0.7j))
        pts = 0.98 * np.sqrt(rng.uniform(size=1000)) * np.exp(2j * np.pi * rng.uniform(size=1000))
        a = geodesic_disk(z, 0.8).contains(pts)
        b = geodesic_disk(w, 0.8).contains(m(pts))
        assert np.array_equal(a, b)

    def test_euclidean_circle_of_offcentre_disk(self):
        d = geodesic_disk(0.5, 0.4)
        c, r = d.euclidean_circle()
        # both real-axis endpoints are at hyperbolic distance R
        for x in (c - r, c + r):
            assert hyperbolic_distance(0.5, x) == pytest.approx(0.4, abs=1e-12)


class TestInterpolatingMobius:
    def test_identity_case(self):
        m = interpolating_mobius(0.2, 0.2, 1.0)
        assert abs(m.a) < 1e-15 and math.cos(m.theta) == pytest.approx(1.0)

    def test_to_origin_case(self):
        s = cmath.exp(1.3j)
        m = interpolating_mobius(0.3, 0.0, s)
        assert abs(m.a - 0.3) < 1e-15
        assert abs(m.rotation - s) < 1e-14
        assert abs(m(0.3)) < 1e-15

    @given(disk_points(0.9), disk_points(0.9), st.floats(0, 2 * math.pi))
    def test_sends_z0_to_w0(self, z0, w0, t):
        m = interpolating_mobius(z0, w0, cmath.exp(1j * t))
        assert abs(m(z0) - w0) < 1e-12


class TestQuadrature:
    def test_volume_closed_form(self):
        assert geodesic_volume(1.0) == pytest.approx(VOL_R1, rel=1e-14)
        assert geodesic_volume(0.5) == pytest.approx(VOL_R_HALF, rel=1e-14)

    def test_constant(self):
        d = geodesic_disk(0j, 1.0)
        assert hyperbolic_quadrature(d, lambda z: np.ones(z.shape)) == pytest.approx(VOL_R1, rel=1e-12)
        assert hyperbolic_quadrature(d, lambda z: np.zeros(z.shape)) == 0.0

    def test_offcentre_constant(self):
        d = geodesic_disk(0.6 - 0.2j, 1.0)
        assert hyperbolic_quadrature(d, lambda z: np.ones(z.shape)) == pytest.approx(VOL_R1, rel=1e-12)

    def test_smooth_integrand(self):
        d = geodesic_disk(0j, 1.0)
        val = hyperbolic_quadrature(d, lambda z: np.exp(-np.abs(z) ** 2))
        assert val == pytest.approx(GAUSS_R1, rel=1e-10)

    def test_doubling_convergence(self):
        d = geodesic_disk(0.1j, 1.0)
        f = lambda z: np.ones(z.shape)  # noqa: E731
        a = hyperbolic_quadrature(d, f, 24, 48)
        b = hyperbolic_quadrature(d, f, 48, 96)
        assert abs(a - b) / b < 1e-8

    def test_rule_is_cached_and_readonly(self):
        r = quadrature_rule(1.0, 24, 48)
        assert r is quadrature_rule(1.0, 24, 48)
        with pytest.raises(ValueError):
            r.weights[0] = 1.0
