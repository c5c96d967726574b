"""Fixed-step discretization of trip arrays for playback and analysis.

Samples are anchored on the absolute grid of multiples of t_step: the start
node is emitted only when its time is grid aligned, every following grid
time within a segment yields the interpolated position tagged with that
segment's activity type, and segments that fall entirely between two grid
times are skipped. No sample is emitted past the final node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ems_sim import geo
from ems_sim.domain import TripType
from ems_sim.errors import AmbiguousGeodesic, InvalidStep
from ems_sim.geo import _kernels
from ems_sim.streets import Router


@dataclass
class DiscretizedRide:
    lat: np.ndarray
    lon: np.ndarray
    times: np.ndarray
    types: np.ndarray          # int trip-type codes
    t_step: float

    def __len__(self) -> int:
        return len(self.times)

    def rides(self) -> list[geo.GeoPoint]:
        return [geo.geopoint_from_deg(float(a), float(b))
                for a, b in zip(self.lat, self.lon)]


def discretize(trips: Sequence[geo.GeoPoint], times: Sequence[float],
               types: Sequence[TripType], t_step: float, v: float) -> DiscretizedRide:
    """Sample one ambulance's trip arrays every t_step seconds."""
    if t_step <= 0:
        raise InvalidStep(f"t_step must be positive, got {t_step}")
    n = len(trips)
    if len(times) != n or (n and len(types) != n - 1):
        raise ValueError("trips/times/types lengths are inconsistent")
    out_k: list[int] = []          # grid indices (time = k * t_step)
    out_seg: list[int] = []        # bracketing segment per sample
    out_type: list[int] = []
    if n == 0:
        return DiscretizedRide(np.empty(0), np.empty(0), np.empty(0),
                               np.empty(0, dtype=np.int8), t_step)

    t0 = times[0]
    k = math.floor(t0 / t_step)
    if k * t_step == t0:
        out_k.append(k)
        out_seg.append(0)
        out_type.append(int(types[0]) if types else int(TripType.AT_STATION))
    if n == 1:
        return _materialize(trips, times, out_k, out_seg, out_type, t_step, v)

    i = 0
    t_next = times[1]
    while i < n - 1:
        while (k + 1) * t_step <= t_next:
            k += 1
            out_k.append(k)
            out_seg.append(i)
            out_type.append(int(types[i]))
        # advance to the segment containing the next grid time, skipping any
        # segment that starts and ends strictly between grid points
        if i + 1 == n - 1:
            i += 1
        else:
            while True:
                i += 1
                if i + 1 > n - 1 or (k + 1) * t_step <= times[i + 1]:
                    break
            if i < n - 1:
                t_next = times[i + 1]
    return _materialize(trips, times, out_k, out_seg, out_type, t_step, v)


def _materialize(trips, times, out_k, out_seg, out_type, t_step, v) -> DiscretizedRide:
    m = len(out_k)
    if m == 0:
        return DiscretizedRide(np.empty(0), np.empty(0), np.empty(0),
                               np.empty(0, dtype=np.int8), t_step)
    sample_times = np.array([k * t_step for k in out_k], dtype=np.float64)
    lat1 = np.empty(m)
    lon1 = np.empty(m)
    lat2 = np.empty(m)
    lon2 = np.empty(m)
    alpha0 = np.empty(m)
    v_km_s = v / 3600.0
    for idx in range(m):
        i = out_seg[idx]
        a = trips[i]
        b = trips[i + 1] if i + 1 < len(trips) else trips[i]
        lat1[idx], lon1[idx] = a.lat, a.lon
        lat2[idx], lon2[idx] = b.lat, b.lon
        alpha0[idx] = v_km_s * (sample_times[idx] - times[i]) / geo.EARTH_RADIUS_KM
    _reject_antipodal(lat1, lon1, lat2, lon2)
    out_lat, out_lon = _kernels.interpolate(lat1, lon1, lat2, lon2, alpha0)
    return DiscretizedRide(out_lat, out_lon, sample_times,
                           np.array(out_type, dtype=np.int8), t_step)


def _reject_antipodal(lat1, lon1, lat2, lon2) -> None:
    alpha = _kernels.central_angle(lat1, lon1, lat2, lon2)
    bad = (np.sin(alpha) <= 1e-12) & (alpha > 1.0)
    if np.any(bad):
        raise AmbiguousGeodesic("trip arrays contain an antipodal segment")


def expand_over_streets(trips: Sequence[geo.GeoPoint], times: Sequence[float],
                        types: Sequence[TripType], router: Router
                        ) -> tuple[list[geo.GeoPoint], list[float], list[TripType]]:
    """Replace each moving segment by the street-route waypoints between its
    endpoints, arrival times spread by edge travel time and rescaled to hit
    the segment's recorded end time. Stationary segments pass through. With
    no graph loaded this is the identity."""
    if router.graph is None:
        return list(trips), list(times), list(types)
    out_trips: list[geo.GeoPoint] = [trips[0]]
    out_times: list[float] = [times[0]]
    out_types: list[TripType] = []
    for i, trip_type in enumerate(types):
        a, b = trips[i], trips[i + 1]
        ta, tb = times[i], times[i + 1]
        moving = trip_type in (TripType.TO_SCENE, TripType.TO_HOSPITAL,
                               TripType.TO_CLEANING, TripType.TO_STATION)
        if not moving or a == b or tb <= ta:
            out_trips.append(b)
            out_times.append(tb)
            out_types.append(trip_type)
            continue
        pts = router.route_points(a, b, ta)
        legs = [geo.gc_distance(pts[j], pts[j + 1]) for j in range(len(pts) - 1)]
        total = sum(legs)
        cum = 0.0
        for j in range(1, len(pts)):
            cum += legs[j - 1]
            frac = cum / total if total > 0 else 1.0
            out_trips.append(pts[j])
            out_times.append(ta + frac * (tb - ta))
            out_types.append(trip_type)
        # route endpoints include the exact destination, so the last entry
        # lands on (b, tb) up to rounding; pin it exactly
        out_trips[-1] = b
        out_times[-1] = tb
    return out_trips, out_times, out_types
