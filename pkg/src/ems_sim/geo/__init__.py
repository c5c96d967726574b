"""Spherical geometry on the R = 6371 km Earth sphere.

Coordinates cross the module boundary in degrees; all internal math is in
radians. Travel durations are seconds, speeds km/h, distances km.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ems_sim.errors import AmbiguousGeodesic, InvalidSpeed, OffSphere
from ems_sim.geo import _kernels
from ems_sim.geo._kernels import EARTH_RADIUS_KM, backend

__all__ = [
    "EARTH_RADIUS_KM",
    "DEFAULT_SPEED_KMH",
    "GeoPoint",
    "Point3",
    "EarthConstants",
    "geopoint_from_deg",
    "to_cartesian",
    "from_cartesian",
    "central_angle",
    "gc_distance",
    "travel_time_gc",
    "position_between",
    "backend",
]

DEFAULT_SPEED_KMH = 60.0

_OFF_SPHERE_REL = 1e-6
_POLE_REL = 1e-9
_ANTIPODAL_SIN = 1e-12


@dataclass(frozen=True)
class GeoPoint:
    """A (latitude, longitude) pair in degrees, longitude in (-180, 180]."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-180.0 < self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class Point3:
    """Cartesian coordinates in km, origin at the Earth center."""

    x: float
    y: float
    z: float

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


@dataclass(frozen=True)
class EarthConstants:
    R: float = EARTH_RADIUS_KM
    v: float = DEFAULT_SPEED_KMH

    def __post_init__(self):
        if self.R != EARTH_RADIUS_KM:
            raise ValueError("Earth radius is fixed at 6371 km")
        if self.v <= 0:
            raise InvalidSpeed(f"speed must be positive, got {self.v}")


def geopoint_from_deg(lat: float, lon: float) -> GeoPoint:
    """GeoPoint from raw float math, folding lon = -180 onto +180 and
    clamping sub-ulp latitude overshoot."""
    if lon <= -180.0:
        lon += 360.0
    elif lon > 180.0:
        lon -= 360.0
    if lat > 90.0:
        lat = 90.0
    elif lat < -90.0:
        lat = -90.0
    return GeoPoint(lat, lon)


def to_cartesian(p: GeoPoint) -> Point3:
    """Cartesian coordinates of a surface point."""
    lat = math.radians(p.lat)
    lon = math.radians(p.lon)
    cos_lat = math.cos(lat)
    return Point3(
        EARTH_RADIUS_KM * cos_lat * math.cos(lon),
        EARTH_RADIUS_KM * cos_lat * math.sin(lon),
        EARTH_RADIUS_KM * math.sin(lat),
    )


def from_cartesian(p: Point3) -> GeoPoint:
    """Latitude/longitude of a Cartesian point on the sphere.

    The longitude sign follows the sign of y; at a pole the longitude is
    defined as 0. Points farther than 1e-6 relative off the sphere raise
    :class:`OffSphere`.
    """
    r = p.norm()
    if abs(r - EARTH_RADIUS_KM) / EARTH_RADIUS_KM > _OFF_SPHERE_REL:
        raise OffSphere(f"|P| = {r} km is not on the sphere of radius {EARTH_RADIUS_KM} km")
    zr = min(1.0, max(-1.0, p.z / EARTH_RADIUS_KM))
    lat = math.degrees(math.asin(zr))
    if abs(zr) >= 1.0 - _POLE_REL:
        return GeoPoint(lat, 0.0)
    denom = math.sqrt(max(EARTH_RADIUS_KM**2 - p.z * p.z, 0.0))
    ratio = min(1.0, max(-1.0, p.x / denom))
    lon = math.degrees(math.acos(ratio))
    if p.y < 0.0:
        lon = -lon
    return geopoint_from_deg(lat, lon)


def central_angle(a: GeoPoint, b: GeoPoint) -> float:
    """Angle at the Earth center subtended by a and b, in [0, pi] radians."""
    pa = to_cartesian(a)
    pb = to_cartesian(b)
    chord = math.sqrt((pb.x - pa.x) ** 2 + (pb.y - pa.y) ** 2 + (pb.z - pa.z) ** 2)
    return 2.0 * math.asin(min(1.0, chord / (2.0 * EARTH_RADIUS_KM)))


def gc_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km."""
    return EARTH_RADIUS_KM * central_angle(a, b)


def travel_time_gc(a: GeoPoint, b: GeoPoint, t0: float, v: float) -> float:
    """Seconds to travel the great circle from a to b at constant v km/h.

    Independent of t0 in the time-invariant speed model; t0 is part of the
    signature so time-of-day profiles can slot in without interface changes.
    """
    if v <= 0:
        raise InvalidSpeed(f"speed must be positive, got {v}")
    return gc_distance(a, b) / v * 3600.0


def position_between(a: GeoPoint, b: GeoPoint, t0: float, t: float, v: float) -> GeoPoint:
    """Position at time t of a trip from a to b started at t0 at speed v km/h.

    The traversed arc angle is clamped to [0, alpha], so querying slightly
    past the arrival time returns b. Antipodal endpoints are rejected.
    """
    if v <= 0:
        raise InvalidSpeed(f"speed must be positive, got {v}")
    alpha = central_angle(a, b)
    if alpha <= _ANTIPODAL_SIN:
        return a
    if math.sin(alpha) <= _ANTIPODAL_SIN:
        raise AmbiguousGeodesic(f"antipodal endpoints {a} and {b}")
    alpha0 = (v / 3600.0) * (t - t0) / EARTH_RADIUS_KM
    lat, lon = _kernels.interpolate(
        np.array([a.lat]),
        np.array([a.lon]),
        np.array([b.lat]),
        np.array([b.lon]),
        np.array([alpha0]),
    )
    return geopoint_from_deg(float(lat[0]), float(lon[0]))
