"""Array kernels for spherical geometry.

These are the hot inner loops of trajectory discretization: converting
(latitude, longitude) pairs to Cartesian coordinates on the R = 6371 km
sphere, measuring central angles, and interpolating positions along great
circles.

Two interchangeable backends are provided:

* a numba ``@njit`` loop backend (default), and
* a vectorized pure-numpy backend, selected by setting the environment
  variable ``EMS_SIM_NO_NUMBA=1`` before import (or automatically when
  numba is not installed).

Both backends implement the same double-precision formulas; the benchmark
in ``benchmarks/bench_kernels.py`` compares them.
"""

from __future__ import annotations

import math
import os

import numpy as np

EARTH_RADIUS_KM = 6371.0

# Pole detection threshold for |z|/R and the sin(alpha) floor below which a
# segment is treated as degenerate (endpoints coincide for practical purposes).
_POLE_EPS = 1e-9
_DEGENERATE_SIN = 1e-12


def _latlon_to_xyz_np(lat_deg, lon_deg):
    lat = np.radians(np.asarray(lat_deg, dtype=np.float64))
    lon = np.radians(np.asarray(lon_deg, dtype=np.float64))
    cos_lat = np.cos(lat)
    x = EARTH_RADIUS_KM * cos_lat * np.cos(lon)
    y = EARTH_RADIUS_KM * cos_lat * np.sin(lon)
    z = EARTH_RADIUS_KM * np.sin(lat)
    return x, y, z


def _xyz_to_latlon_np(x, y, z):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    zr = np.clip(z / EARTH_RADIUS_KM, -1.0, 1.0)
    lat = np.degrees(np.arcsin(zr))
    at_pole = np.abs(zr) >= 1.0 - _POLE_EPS
    denom = np.sqrt(np.maximum(EARTH_RADIUS_KM**2 - z * z, 0.0))
    # avoid 0/0 at the poles; the result there is overwritten below
    safe = np.where(at_pole, 1.0, denom)
    ratio = np.clip(x / safe, -1.0, 1.0)
    lon = np.degrees(np.arccos(ratio))
    lon = np.where(y < 0.0, -lon, lon)
    lon = np.where(at_pole, 0.0, lon)
    return lat, lon


def _central_angle_np(lat1, lon1, lat2, lon2):
    x1, y1, z1 = _latlon_to_xyz_np(lat1, lon1)
    x2, y2, z2 = _latlon_to_xyz_np(lat2, lon2)
    chord = np.sqrt((x2 - x1) ** 2 + (y2 - y1) ** 2 + (z2 - z1) ** 2)
    return 2.0 * np.arcsin(np.clip(chord / (2.0 * EARTH_RADIUS_KM), 0.0, 1.0))


def _interpolate_np(lat1, lon1, lat2, lon2, alpha0):
    """Positions along great circles at arc angle ``alpha0`` from the origin.

    ``alpha0`` is clamped per element to [0, alpha]; degenerate segments
    (endpoints closer than the sin floor) return the origin endpoint.
    """
    x1, y1, z1 = _latlon_to_xyz_np(lat1, lon1)
    x2, y2, z2 = _latlon_to_xyz_np(lat2, lon2)
    chord = np.sqrt((x2 - x1) ** 2 + (y2 - y1) ** 2 + (z2 - z1) ** 2)
    alpha = 2.0 * np.arcsin(np.clip(chord / (2.0 * EARTH_RADIUS_KM), 0.0, 1.0))
    a0 = np.clip(np.asarray(alpha0, dtype=np.float64), 0.0, alpha)
    sin_a = np.sin(alpha)
    degenerate = sin_a <= _DEGENERATE_SIN
    safe_sin = np.where(degenerate, 1.0, sin_a)
    w1 = np.sin(alpha - a0) / safe_sin
    w2 = np.sin(a0) / safe_sin
    w1 = np.where(degenerate, 1.0, w1)
    w2 = np.where(degenerate, 0.0, w2)
    x = w1 * x1 + w2 * x2
    y = w1 * y1 + w2 * y2
    z = w1 * z1 + w2 * z2
    return _xyz_to_latlon_np(x, y, z)


def _interpolate_loop(lat1, lon1, lat2, lon2, alpha0):
    n = lat1.shape[0]
    out_lat = np.empty(n, dtype=np.float64)
    out_lon = np.empty(n, dtype=np.float64)
    r = EARTH_RADIUS_KM
    for k in range(n):
        p1lat = math.radians(lat1[k])
        p1lon = math.radians(lon1[k])
        p2lat = math.radians(lat2[k])
        p2lon = math.radians(lon2[k])
        c1 = math.cos(p1lat)
        x1 = r * c1 * math.cos(p1lon)
        y1 = r * c1 * math.sin(p1lon)
        z1 = r * math.sin(p1lat)
        c2 = math.cos(p2lat)
        x2 = r * c2 * math.cos(p2lon)
        y2 = r * c2 * math.sin(p2lon)
        z2 = r * math.sin(p2lat)
        dx = x2 - x1
        dy = y2 - y1
        dz = z2 - z1
        half = math.sqrt(dx * dx + dy * dy + dz * dz) / (2.0 * r)
        if half > 1.0:
            half = 1.0
        alpha = 2.0 * math.asin(half)
        a0 = alpha0[k]
        if a0 < 0.0:
            a0 = 0.0
        elif a0 > alpha:
            a0 = alpha
        sin_a = math.sin(alpha)
        if sin_a <= _DEGENERATE_SIN:
            w1 = 1.0
            w2 = 0.0
        else:
            w1 = math.sin(alpha - a0) / sin_a
            w2 = math.sin(a0) / sin_a
        x = w1 * x1 + w2 * x2
        y = w1 * y1 + w2 * y2
        z = w1 * z1 + w2 * z2
        zr = z / r
        if zr > 1.0:
            zr = 1.0
        elif zr < -1.0:
            zr = -1.0
        out_lat[k] = math.degrees(math.asin(zr))
        if abs(zr) >= 1.0 - _POLE_EPS:
            out_lon[k] = 0.0
        else:
            denom = math.sqrt(max(r * r - z * z, 0.0))
            ratio = x / denom
            if ratio > 1.0:
                ratio = 1.0
            elif ratio < -1.0:
                ratio = -1.0
            lon = math.degrees(math.acos(ratio))
            out_lon[k] = -lon if y < 0.0 else lon
    return out_lat, out_lon


def _central_angle_loop(lat1, lon1, lat2, lon2):
    n = lat1.shape[0]
    out = np.empty(n, dtype=np.float64)
    r = EARTH_RADIUS_KM
    for k in range(n):
        p1lat = math.radians(lat1[k])
        p1lon = math.radians(lon1[k])
        p2lat = math.radians(lat2[k])
        p2lon = math.radians(lon2[k])
        c1 = math.cos(p1lat)
        x1 = r * c1 * math.cos(p1lon)
        y1 = r * c1 * math.sin(p1lon)
        z1 = r * math.sin(p1lat)
        c2 = math.cos(p2lat)
        x2 = r * c2 * math.cos(p2lon)
        y2 = r * c2 * math.sin(p2lon)
        z2 = r * math.sin(p2lat)
        dx = x2 - x1
        dy = y2 - y1
        dz = z2 - z1
        half = math.sqrt(dx * dx + dy * dy + dz * dz) / (2.0 * r)
        if half > 1.0:
            half = 1.0
        out[k] = 2.0 * math.asin(half)
    return out


def _env_disables_numba() -> bool:
    return os.environ.get("EMS_SIM_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")


_BACKEND = "numpy"
interpolate = _interpolate_np
central_angle = _central_angle_np

if not _env_disables_numba():
    try:
        from numba import njit
    except ImportError:
        njit = None
    if njit is not None:
        interpolate = njit(cache=True)(_interpolate_loop)
        central_angle = njit(cache=True)(_central_angle_loop)
        _BACKEND = "numba"

latlon_to_xyz = _latlon_to_xyz_np
xyz_to_latlon = _xyz_to_latlon_np


def backend() -> str:
    """Name of the active kernel backend: ``"numba"`` or ``"numpy"``."""
    return _BACKEND
