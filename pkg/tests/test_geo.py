import math

import numpy as np
import pytest

from ems_sim import geo
from ems_sim.errors import AmbiguousGeodesic, InvalidSpeed, OffSphere
from ems_sim.geo import GeoPoint, Point3, _kernels

from conftest import haversine_km, rotation_slerp

R = geo.EARTH_RADIUS_KM


def random_points(rng, n, lat_span=89.0):
    return [GeoPoint(float(rng.uniform(-lat_span, lat_span)),
                     float(rng.uniform(-179.9, 180.0))) for _ in range(n)]


class TestCartesianConversion:
    def test_equator_prime_meridian(self):
        p = geo.to_cartesian(GeoPoint(0, 0))
        assert (p.x, p.y, p.z) == pytest.approx((R, 0, 0), abs=1e-9)

    def test_north_pole_ignores_longitude(self):
        p = geo.to_cartesian(GeoPoint(90, 45))
        assert (p.x, p.y, p.z) == pytest.approx((0, 0, R), abs=1e-9)

    def test_axis_alignment(self):
        p = geo.to_cartesian(GeoPoint(0, 90))
        assert (p.x, p.y, p.z) == pytest.approx((0, R, 0), abs=1e-9)

    def test_from_cartesian_basic(self):
        g = geo.from_cartesian(Point3(R, 0, 0))
        assert (g.lat, g.lon) == (0, 0)

    def test_from_cartesian_negative_y_branch(self):
        g = geo.from_cartesian(Point3(0, -R, 0))
        assert (g.lat, g.lon) == pytest.approx((0, -90))

    def test_from_cartesian_pole_longitude_zero(self):
        g = geo.from_cartesian(Point3(0, 0, R))
        assert (g.lat, g.lon) == (90, 0)

    def test_off_sphere_rejected(self):
        with pytest.raises(OffSphere):
            geo.from_cartesian(Point3(R * 1.001, 0, 0))

    def test_round_trip_identity(self, rng):
        for p in random_points(rng, 1000):
            q = geo.from_cartesian(geo.to_cartesian(p))
            assert q.lat == pytest.approx(p.lat, abs=1e-9)
            assert q.lon == pytest.approx(p.lon, abs=1e-9)

    def test_geopoint_validation(self):
        with pytest.raises(ValueError):
            GeoPoint(91, 0)
        with pytest.raises(ValueError):
            GeoPoint(0, -180)
        assert GeoPoint(0, 180).lon == 180


class TestCentralAngle:
    def test_coincident(self):
        assert geo.central_angle(GeoPoint(10, 20), GeoPoint(10, 20)) == 0

    def test_quarter_circle(self):
        assert geo.central_angle(GeoPoint(0, 0), GeoPoint(0, 90)) == pytest.approx(
            math.pi / 2, rel=1e-12)

    def test_antipodal(self):
        assert geo.central_angle(GeoPoint(0, 0), GeoPoint(0, 180)) == pytest.approx(
            math.pi, rel=1e-12)

    def test_symmetry(self, rng):
        pts = random_points(rng, 50)
        for a, b in zip(pts[::2], pts[1::2]):
            assert geo.central_angle(a, b) == geo.central_angle(b, a)
            assert geo.travel_time_gc(a, b, 0, 60) == geo.travel_time_gc(b, a, 0, 60)

    def test_matches_haversine(self, rng):
        for a, b in zip(random_points(rng, 100), random_points(rng, 100)):
            assert R * geo.central_angle(a, b) == pytest.approx(haversine_km(a, b),
                                                                abs=1e-6)


class TestTravelTime:
    def test_zero_distance(self):
        assert geo.travel_time_gc(GeoPoint(1, 1), GeoPoint(1, 1), 0, 50) == 0

    def test_quarter_circle_at_100kmh(self):
        t = geo.travel_time_gc(GeoPoint(0, 0), GeoPoint(0, 90), 0, 100)
        expected_h = math.pi * R / 2 / 100          # about 100.0754 hours
        assert t == pytest.approx(expected_h * 3600, rel=1e-9)

    def test_one_degree_arc_matches_haversine_oracle(self):
        a, b = GeoPoint(0, 0), GeoPoint(0, 1)
        t = geo.travel_time_gc(a, b, 0, 60)
        assert t == pytest.approx(haversine_km(a, b) / 60 * 3600, rel=1e-9)
        assert t / 3600 == pytest.approx(1.8533, abs=1e-4)

    def test_invalid_speed(self):
        with pytest.raises(InvalidSpeed):
            geo.travel_time_gc(GeoPoint(0, 0), GeoPoint(0, 1), 0, 0)

    def test_independent_of_start_time(self):
        a, b = GeoPoint(3, 4), GeoPoint(5, 6)
        assert geo.travel_time_gc(a, b, 0, 60) == geo.travel_time_gc(a, b, 9999, 60)


class TestPositionBetween:
    def test_start_point(self):
        a, b = GeoPoint(10, 20), GeoPoint(30, 40)
        p = geo.position_between(a, b, 100, 100, 60)
        assert (p.lat, p.lon) == pytest.approx((a.lat, a.lon), abs=1e-9)

    def test_end_point_and_overshoot_clamp(self):
        a, b = GeoPoint(10, 20), GeoPoint(30, 40)
        d = geo.travel_time_gc(a, b, 0, 60)
        for t in (d, d * 1.5):
            p = geo.position_between(a, b, 0, t, 60)
            assert (p.lat, p.lon) == pytest.approx((b.lat, b.lon), abs=1e-9)

    def test_equatorial_midpoint(self):
        a, b = GeoPoint(0, 0), GeoPoint(0, 90)
        d = geo.travel_time_gc(a, b, 0, 100)
        p = geo.position_between(a, b, 0, d / 2, 100)
        assert (p.lat, p.lon) == pytest.approx((0, 45), abs=1e-9)

    def test_same_point_returns_origin(self):
        a = GeoPoint(5, 5)
        assert geo.position_between(a, a, 0, 50, 60) == a

    def test_antipodal_rejected(self):
        with pytest.raises(AmbiguousGeodesic):
            geo.position_between(GeoPoint(0, 0), GeoPoint(0, 180), 0, 10, 60)

    def test_matches_rotation_oracle(self, rng):
        for _ in range(500):
            a, b = random_points(rng, 2)
            alpha = geo.central_angle(a, b)
            if alpha < 1e-9 or alpha > math.pi - 1e-3:
                continue
            frac = float(rng.uniform(0, 1))
            d = geo.travel_time_gc(a, b, 0, 60)
            p = geo.position_between(a, b, 0, frac * d, 60)
            q = rotation_slerp(a, b, frac)
            d_lon = abs(p.lon - q.lon) % 360
            assert p.lat == pytest.approx(q.lat, abs=1e-7)
            assert min(d_lon, 360 - d_lon) == pytest.approx(0, abs=1e-7)

    def test_results_on_sphere(self, rng):
        for _ in range(200):
            a, b = random_points(rng, 2)
            if geo.central_angle(a, b) > math.pi - 1e-3:
                continue
            d = geo.travel_time_gc(a, b, 0, 60)
            p = geo.position_between(a, b, 0, float(rng.uniform(0, d)), 60)
            r = geo.to_cartesian(p).norm()
            assert abs(r - R) / R < 1e-9

    def test_path_additivity(self, rng):
        for _ in range(100):
            a, b = random_points(rng, 2)
            alpha = geo.central_angle(a, b)
            if alpha < 1e-6 or alpha > math.pi - 1e-3:
                continue
            d = geo.travel_time_gc(a, b, 0, 60)
            s1, s2 = sorted(rng.uniform(0, 1, size=2))
            p1 = geo.position_between(a, b, 0, s1 * d, 60)
            p2 = geo.position_between(a, b, 0, s2 * d, 60)
            lhs = geo.central_angle(a, p1) + geo.central_angle(p1, p2)
            assert lhs == pytest.approx(geo.central_angle(a, p2), abs=1e-9)

    def test_monotone_progress(self, rng):
        a, b = GeoPoint(-10, -20), GeoPoint(35, 70)
        d = geo.travel_time_gc(a, b, 0, 60)
        angles = [geo.central_angle(a, geo.position_between(a, b, 0, t, 60))
                  for t in np.linspace(0, d * 1.1, 50)]
        assert all(x2 >= x1 - 1e-12 for x1, x2 in zip(angles, angles[1:]))


class TestKernelBackends:
    def test_numba_and_numpy_paths_agree(self, rng):
        n = 300
        lat1 = rng.uniform(-80, 80, n)
        lon1 = rng.uniform(-179, 180, n)
        lat2 = rng.uniform(-80, 80, n)
        lon2 = rng.uniform(-179, 180, n)
        alpha = _kernels._central_angle_np(lat1, lon1, lat2, lon2)
        a0 = rng.uniform(0, 1, n) * alpha
        la_np, lo_np = _kernels._interpolate_np(lat1, lon1, lat2, lon2, a0)
        la_loop, lo_loop = _kernels._interpolate_loop(lat1, lon1, lat2, lon2, a0)
        np.testing.assert_allclose(la_np, la_loop, atol=1e-12)
        np.testing.assert_allclose(lo_np, lo_loop, atol=1e-12)
        la_sel, lo_sel = _kernels.interpolate(lat1, lon1, lat2, lon2, a0)
        np.testing.assert_allclose(la_sel, la_np, atol=1e-12)
        np.testing.assert_allclose(lo_sel, lo_np, atol=1e-12)

    def test_central_angle_backends_agree(self, rng):
        n = 200
        lat1 = rng.uniform(-80, 80, n)
        lon1 = rng.uniform(-179, 180, n)
        lat2 = rng.uniform(-80, 80, n)
        lon2 = rng.uniform(-179, 180, n)
        np.testing.assert_allclose(
            _kernels._central_angle_np(lat1, lon1, lat2, lon2),
            _kernels._central_angle_loop(lat1, lon1, lat2, lon2), atol=1e-14)

    def test_backend_reports_a_name(self):
        assert geo.backend() in ("numba", "numpy")
