"""Shared data model: calls, ambulances, trip records and taxonomies.

Timestamps are float seconds from the scenario start. An ambulance that is
not at (or heading to) a station carries the FAR_FUTURE sentinel in t_b.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

from ems_sim.geo import GeoPoint

FAR_FUTURE = math.inf


class TripType(enum.IntEnum):
    AT_STATION = 1
    TO_SCENE = 2
    ON_SCENE = 3
    TO_HOSPITAL = 4
    AT_HOSPITAL = 5
    TO_CLEANING = 6
    CLEANING = 7
    TO_STATION = 8


# Admissible successor trip types. Service completion points (3 for
# scene-only, 5 for hospital-only, 7 after cleaning) may chain straight into
# a new response (2), head to a station (8), or start idling in place when
# the completion site doubles as a station (1).
_NEXT: dict[int, set[int]] = {
    1: {2},
    2: {3},
    3: {4, 6, 8, 2, 1},
    4: {5},
    5: {6, 8, 2, 1},
    6: {7},
    7: {8, 2, 1},
    8: {1, 2},
}


class Priority(enum.IntEnum):
    LOW = 0
    INTERMEDIATE = 1
    HIGH = 2


# Default urgency weights per priority; overridable per call type.
DEFAULT_THETA = {Priority.LOW: 1.0, Priority.INTERMEDIATE: 2.0, Priority.HIGH: 4.0}


class ServiceClass(enum.Enum):
    """Hospital-transport x cleaning-station combinations."""

    C1 = "C1"  # hospital, then cleaning station
    C2 = "C2"  # hospital only
    C3 = "C3"  # cleaning station only
    C4 = "C4"  # neither

    @property
    def to_hospital(self) -> bool:
        return self in (ServiceClass.C1, ServiceClass.C2)

    @property
    def to_cleaning(self) -> bool:
        return self in (ServiceClass.C1, ServiceClass.C3)

    @property
    def service_types(self) -> tuple[TripType, ...]:
        return _SERVICE_TYPES[self]


_SERVICE_TYPES = {
    ServiceClass.C1: (TripType.TO_SCENE, TripType.ON_SCENE, TripType.TO_HOSPITAL,
                      TripType.AT_HOSPITAL, TripType.TO_CLEANING, TripType.CLEANING),
    ServiceClass.C2: (TripType.TO_SCENE, TripType.ON_SCENE, TripType.TO_HOSPITAL,
                      TripType.AT_HOSPITAL),
    ServiceClass.C3: (TripType.TO_SCENE, TripType.ON_SCENE, TripType.TO_CLEANING,
                      TripType.CLEANING),
    ServiceClass.C4: (TripType.TO_SCENE, TripType.ON_SCENE),
}


@dataclass(frozen=True)
class CallType:
    id: int
    label: str
    priority: Priority
    theta: float = 0.0          # 0 means "use the priority default"
    required_rank: int = 0      # minimum ambulance rank for a zero mismatch cost

    def __post_init__(self):
        if self.theta == 0.0:
            object.__setattr__(self, "theta", DEFAULT_THETA[self.priority])
        if self.theta <= 0:
            raise ValueError(f"theta must be positive, got {self.theta}")


@dataclass(frozen=True)
class AmbulanceType:
    id: int
    label: str
    rank: int  # capability order; higher = more advanced


@dataclass
class EmergencyCall:
    """One emergency with its fully materialized service data."""

    id: int
    t_c: float
    loc: GeoPoint
    call_type: CallType
    service_class: ServiceClass
    time_on_scene: float = 0.0
    hospital: Optional[GeoPoint] = None
    time_at_hospital: Optional[float] = None
    cleaning_station: Optional[GeoPoint] = None
    cleaning_time: Optional[float] = None
    base_after: Optional[GeoPoint] = None

    def __post_init__(self):
        sc = self.service_class
        if sc.to_hospital != (self.hospital is not None):
            raise ValueError(f"call {self.id}: hospital data inconsistent with {sc.value}")
        if sc.to_hospital != (self.time_at_hospital is not None):
            raise ValueError(f"call {self.id}: hospital time inconsistent with {sc.value}")
        if sc.to_cleaning != (self.cleaning_station is not None):
            raise ValueError(f"call {self.id}: cleaning data inconsistent with {sc.value}")
        if sc.to_cleaning != (self.cleaning_time is not None):
            raise ValueError(f"call {self.id}: cleaning time inconsistent with {sc.value}")
        for name in ("time_on_scene", "time_at_hospital", "cleaning_time"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"call {self.id}: {name} must be nonnegative")


@dataclass
class CallRecord:
    call_id: int
    waiting_on_scene: float
    waiting_on_scene_penalized: float
    serving_ambulance: int  # -1 when the call could not be served
    allocation_cost: float
    waiting_to_hospital: Optional[float] = None
    waiting_to_hospital_penalized: Optional[float] = None


class Availability(enum.Enum):
    AT_STATION = "AtStation"
    EN_ROUTE_TO_STATION = "EnRouteToStation"
    BUSY = "Busy"


@dataclass
class AmbulanceState:
    """Per-ambulance state vector plus the accumulated trip arrays.

    trips[j] / times[j] is the j-th visited location and the time it was
    reached; types[j] describes the activity between nodes j and j+1.
    """

    id: int
    amb_type: AmbulanceType
    t_f: float
    loc_f: GeoPoint
    t_b: float
    loc_b: GeoPoint
    home_base: Optional[GeoPoint] = None
    trips: list[GeoPoint] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    types: list[TripType] = field(default_factory=list)


def availability(s: AmbulanceState, now: float) -> Availability:
    """Case A (at station), B (returning to station) or C (busy) at ``now``."""
    if s.t_b <= now:
        return Availability.AT_STATION
    if s.t_f <= now:
        return Availability.EN_ROUTE_TO_STATION
    return Availability.BUSY


def validate_trip_sequence(s: AmbulanceState) -> list[str]:
    """Check the trip arrays against the activity automaton.

    Returns a list of violation messages (empty when the history is valid);
    each message carries the first offending index of its kind.
    """
    violations: list[str] = []
    trips, times, types = s.trips, s.times, s.types
    if len(times) != len(trips):
        violations.append(f"len(times)={len(times)} != len(trips)={len(trips)}")
        return violations
    if trips and len(types) != len(trips) - 1:
        violations.append(f"len(types)={len(types)} != len(trips)-1={len(trips) - 1}")
        return violations
    if not trips and types:
        violations.append("types present with empty trips")
        return violations
    for j in range(1, len(times)):
        if times[j] < times[j - 1]:
            violations.append(f"times decrease at index {j}")
            break
    for j in range(1, len(types)):
        if int(types[j]) not in _NEXT[int(types[j - 1])]:
            violations.append(
                f"illegal transition {int(types[j - 1])} -> {int(types[j])} at index {j}"
            )
            break
    # moving trip types must change location only between distinct nodes;
    # stationary types must keep the location fixed
    for j, tt in enumerate(types):
        stationary = tt in (TripType.AT_STATION, TripType.ON_SCENE,
                            TripType.AT_HOSPITAL, TripType.CLEANING)
        if stationary and trips[j] != trips[j + 1]:
            violations.append(f"stationary segment {j} (type {int(tt)}) moves")
            break
    return violations
