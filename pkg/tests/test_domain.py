import pytest

from ems_sim.domain import (
    Availability,
    AmbulanceState,
    AmbulanceType,
    CallType,
    EmergencyCall,
    FAR_FUTURE,
    Priority,
    ServiceClass,
    TripType,
    availability,
    validate_trip_sequence,
)
from ems_sim.geo import GeoPoint

BLS = AmbulanceType(0, "BLS", 0)
B = GeoPoint(0.0, 0.0)
SCENE = GeoPoint(0.01, 0.01)
H = GeoPoint(0.02, 0.02)


def make_state(t_f, t_b, trips=None, times=None, types=None):
    return AmbulanceState(
        id=0, amb_type=BLS, t_f=t_f, loc_f=B, t_b=t_b, loc_b=B,
        trips=trips or [], times=times or [], types=types or [],
    )


class TestAvailability:
    # reference times: t_f = 36000 (10:00), t_b = 37200 (10:20)
    def test_at_station_after_arrival(self):
        s = make_state(t_f=36000, t_b=37200)
        assert availability(s, 37800) == Availability.AT_STATION

    def test_en_route_between_service_end_and_station(self):
        s = make_state(t_f=36000, t_b=37200)
        assert availability(s, 36300) == Availability.EN_ROUTE_TO_STATION

    def test_busy_before_service_end(self):
        s = make_state(t_f=36000, t_b=FAR_FUTURE)
        assert availability(s, 35400) == Availability.BUSY

    def test_boundaries(self):
        s = make_state(t_f=100.0, t_b=200.0)
        assert availability(s, 100.0) == Availability.EN_ROUTE_TO_STATION
        assert availability(s, 200.0) == Availability.AT_STATION
        assert availability(s, 99.999) == Availability.BUSY


class TestTripSequenceValidation:
    def test_hospital_service_sequence_ok(self):
        # station wait, response, scene, transport, handover, leave for
        # cleaning berth at the station: types 1..6 over seven nodes
        times = [16320, 16560, 17160, 17520, 18360, 19500, 20700]
        trips = [B, B, SCENE, SCENE, H, H, B]
        types = [TripType(k) for k in (1, 2, 3, 4, 5, 6)]
        s = make_state(0, 0, trips=trips, times=times, types=types)
        assert validate_trip_sequence(s) == []

    def test_scene_cannot_follow_station_directly(self):
        s = make_state(0, 0, trips=[B, B, SCENE], times=[0, 10, 20],
                       types=[TripType.AT_STATION, TripType.ON_SCENE])
        violations = validate_trip_sequence(s)
        assert violations and "1 -> 3" in violations[0]

    def test_empty_history_ok(self):
        assert validate_trip_sequence(make_state(0, 0)) == []

    def test_length_mismatch_reported(self):
        s = make_state(0, 0, trips=[B, B], times=[0, 1], types=[])
        assert validate_trip_sequence(s)

    def test_decreasing_times_reported(self):
        s = make_state(0, 0, trips=[B, B, SCENE], times=[0, 10, 5],
                       types=[TripType.AT_STATION, TripType.TO_SCENE])
        assert any("decrease" in v for v in validate_trip_sequence(s))

    def test_stationary_segment_must_not_move(self):
        s = make_state(0, 0, trips=[B, SCENE, SCENE], times=[0, 10, 20],
                       types=[TripType.AT_STATION, TripType.TO_SCENE])
        assert any("stationary" in v for v in validate_trip_sequence(s))


class TestServiceClasses:
    def test_class_composition(self):
        assert ServiceClass.C1.to_hospital and ServiceClass.C1.to_cleaning
        assert ServiceClass.C2.to_hospital and not ServiceClass.C2.to_cleaning
        assert not ServiceClass.C3.to_hospital and ServiceClass.C3.to_cleaning
        assert not ServiceClass.C4.to_hospital and not ServiceClass.C4.to_cleaning

    def test_service_type_sequences(self):
        as_ints = {c: [int(t) for t in c.service_types] for c in ServiceClass}
        assert as_ints[ServiceClass.C1] == [2, 3, 4, 5, 6, 7]
        assert as_ints[ServiceClass.C2] == [2, 3, 4, 5]
        assert as_ints[ServiceClass.C3] == [2, 3, 6, 7]
        assert as_ints[ServiceClass.C4] == [2, 3]


class TestEmergencyCallInvariants:
    def test_c1_requires_hospital_and_cleaning(self):
        call = EmergencyCall(0, 0.0, SCENE, CallType(0, "low", Priority.LOW),
                             ServiceClass.C1, time_on_scene=60, hospital=H,
                             time_at_hospital=60, cleaning_station=B, cleaning_time=60)
        assert call.service_class is ServiceClass.C1

    def test_c4_rejects_hospital_fields(self):
        with pytest.raises(ValueError):
            EmergencyCall(0, 0.0, SCENE, CallType(0, "low", Priority.LOW),
                          ServiceClass.C4, time_on_scene=60, hospital=H,
                          time_at_hospital=60)

    def test_c2_requires_hospital(self):
        with pytest.raises(ValueError):
            EmergencyCall(0, 0.0, SCENE, CallType(0, "low", Priority.LOW),
                          ServiceClass.C2, time_on_scene=60)

    def test_negative_duration_rejected(self):
        with pytest.raises(ValueError):
            EmergencyCall(0, 0.0, SCENE, CallType(0, "low", Priority.LOW),
                          ServiceClass.C4, time_on_scene=-1)

    def test_default_thetas_by_priority(self):
        assert CallType(0, "a", Priority.LOW).theta == 1.0
        assert CallType(1, "b", Priority.INTERMEDIATE).theta == 2.0
        assert CallType(2, "c", Priority.HIGH).theta == 4.0
        assert CallType(3, "d", Priority.LOW, theta=7.5).theta == 7.5
