import math

import numpy as np
import pytest

from ems_sim import geo
from ems_sim.dispatch import CostModel, PolicyId, PolicyName
from ems_sim.domain import AmbulanceType, CallType, Priority, ServiceClass
from ems_sim.sim import AmbulanceSpec, DurationDist, RawCall, SimConfig


CALL_TYPES = [
    CallType(0, "low", Priority.LOW),
    CallType(1, "intermediate", Priority.INTERMEDIATE),
    CallType(2, "high", Priority.HIGH),
]

AMB_TYPES = [
    AmbulanceType(0, "BLS", 0),
    AmbulanceType(1, "ILS", 1),
    AmbulanceType(2, "ALS", 2),
]


def make_cost_model(mismatch=0.0, overrides=None):
    return CostModel.build(CALL_TYPES, AMB_TYPES, mismatch_penalty=mismatch,
                           overrides=overrides)


def make_sim_config(n_amb=2, n_stations=2, policy="CA", horizon=86400.0, seed=0,
                    audit=False, fixed_durations=True, speed=60.0, use_home_base=False,
                    class_probs=None, stations=None, hospitals=None, cleaning=None):
    stations = stations or [geo.GeoPoint(0.0, 0.0), geo.GeoPoint(0.06, 0.06),
                            geo.GeoPoint(-0.05, 0.03)][:max(n_stations, 1)]
    hospitals = hospitals or [geo.GeoPoint(0.02, 0.03)]
    cleaning = cleaning or [geo.GeoPoint(0.04, 0.01)]
    ambs = [AmbulanceSpec(i, AMB_TYPES[i % 3], i % len(stations), i % len(stations))
            for i in range(n_amb)]
    durations = dict(
        on_scene=DurationDist(600.0, 0.0 if fixed_durations else 0.25),
        at_hospital=DurationDist(900.0, 0.0 if fixed_durations else 0.25),
        cleaning=DurationDist(1200.0, 0.0 if fixed_durations else 0.25),
    )
    return SimConfig(
        stations=stations, hospitals=hospitals, cleaning_stations=cleaning,
        ambulances=ambs, call_types=CALL_TYPES, cost_model=make_cost_model(),
        policy=PolicyId.parse(policy), horizon=horizon, seed=seed, audit=audit,
        speed=speed, use_home_base=use_home_base,
        class_probs=class_probs or {c: 0.25 for c in ServiceClass},
        **durations,
    )


def random_calls(rng, n, horizon=86400.0, span=0.05):
    calls = []
    for i in range(n):
        calls.append(RawCall(
            id=i, t=float(rng.uniform(0, horizon * 0.7)),
            loc=geo.GeoPoint(float(rng.uniform(-span, span)),
                             float(rng.uniform(-span, span))),
            call_type_id=int(rng.integers(0, 3)),
            priority=Priority(int(rng.integers(0, 3))),
        ))
    return calls


def haversine_km(a: geo.GeoPoint, b: geo.GeoPoint) -> float:
    """Independent great-circle distance for cross-checking."""
    la1, lo1, la2, lo2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    s = (math.sin((la2 - la1) / 2) ** 2
         + math.cos(la1) * math.cos(la2) * math.sin((lo2 - lo1) / 2) ** 2)
    return 2.0 * 6371.0 * math.asin(min(1.0, math.sqrt(s)))


def rotation_slerp(a: geo.GeoPoint, b: geo.GeoPoint, frac: float) -> geo.GeoPoint:
    """Independent geodesic interpolation: rotate the origin vector about the
    great-circle normal by frac * angle (Rodrigues formula)."""
    def unit(p):
        la, lo = math.radians(p.lat), math.radians(p.lon)
        return np.array([math.cos(la) * math.cos(lo), math.cos(la) * math.sin(lo),
                         math.sin(la)])

    u, w = unit(a), unit(b)
    angle = math.acos(max(-1.0, min(1.0, float(np.dot(u, w)))))
    axis = np.cross(u, w)
    norm = np.linalg.norm(axis)
    if norm < 1e-15:
        return a
    axis /= norm
    th = frac * angle
    rotated = (u * math.cos(th) + np.cross(axis, u) * math.sin(th)
               + axis * float(np.dot(axis, u)) * (1 - math.cos(th)))
    lat = math.degrees(math.asin(max(-1.0, min(1.0, rotated[2]))))
    lon = math.degrees(math.atan2(rotated[1], rotated[0]))
    if lon <= -180.0:
        lon += 360.0
    return geo.GeoPoint(lat, lon)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
