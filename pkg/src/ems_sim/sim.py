"""Discrete-event engine for ambulance operations.

The engine advances over call arrivals and service completions, applies
policy decisions, and materializes per-ambulance trip arrays (locations,
times, activity types) exactly as the state-tracking rules prescribe:
an idle segment is closed when an ambulance is dispatched from a station, a
station-bound segment is truncated at the redirect position, and a busy
ambulance chains its next response from its service-completion point.

Because every travel time and service duration is known once a call is
materialized, a dispatch decision deterministically fixes the whole service
schedule; the engine appends it eagerly and reschedules the ambulance's
completion event.
"""

from __future__ import annotations

import bisect
import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ems_sim import geo
from ems_sim.dispatch import (
    AmbView,
    CostModel,
    DecisionKind,
    DispatchDecision,
    PolicyContext,
    PolicyId,
    allocation_cost,
    policy_on_call,
    policy_on_free,
    response_time_estimate,
)
from ems_sim.domain import (
    AmbulanceState,
    AmbulanceType,
    CallRecord,
    CallType,
    EmergencyCall,
    FAR_FUTURE,
    Priority,
    ServiceClass,
    TripType,
)
from ems_sim.errors import OutOfRange, Unreachable
from ems_sim.streets import Router


@dataclass(frozen=True)
class RawCall:
    """A generated or loaded call before service data is materialized."""

    id: int
    t: float
    loc: geo.GeoPoint
    call_type_id: int
    priority: Priority
    service_class: Optional[ServiceClass] = None


@dataclass(frozen=True)
class DurationDist:
    """Service-duration model: lognormal around a median or a fixed value."""

    median: float
    sigma: float = 0.0

    def sample(self, rng: np.random.Generator) -> float:
        if self.sigma <= 0:
            return self.median
        return float(self.median * math.exp(self.sigma * rng.standard_normal()))


@dataclass(frozen=True)
class AmbulanceSpec:
    id: int
    amb_type: AmbulanceType
    station: int                      # index into SimConfig.stations
    home: Optional[int] = None        # home-base station index


DEFAULT_CLASS_PROBS = {
    ServiceClass.C1: 0.25,
    ServiceClass.C2: 0.25,
    ServiceClass.C3: 0.25,
    ServiceClass.C4: 0.25,
}


@dataclass
class SimConfig:
    stations: list[geo.GeoPoint]
    hospitals: list[geo.GeoPoint]
    cleaning_stations: list[geo.GeoPoint]
    ambulances: list[AmbulanceSpec]
    call_types: list[CallType]
    cost_model: CostModel
    policy: PolicyId
    horizon: float                    # scenario length, seconds
    t_start: float = 0.0
    use_home_base: bool = False
    speed: float = geo.DEFAULT_SPEED_KMH
    on_scene: DurationDist = DurationDist(600.0, 0.25)
    at_hospital: DurationDist = DurationDist(900.0, 0.25)
    cleaning: DurationDist = DurationDist(1200.0, 0.25)
    class_probs: dict[ServiceClass, float] = field(
        default_factory=lambda: dict(DEFAULT_CLASS_PROBS))
    seed: int = 0
    n_scenarios: int = 1
    router: Optional[Router] = None
    audit: bool = False

    def __post_init__(self):
        if not self.ambulances:
            raise ValueError("at least one ambulance is required")
        if not self.stations:
            raise ValueError("at least one station is required")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.speed <= 0:
            raise ValueError("speed must be positive")
        total = sum(self.class_probs.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"service-class probabilities sum to {total}, expected 1")
        if self.router is None:
            self.router = Router(None, self.speed)

    def call_type_by_id(self, type_id: int) -> CallType:
        for c in self.call_types:
            if c.id == type_id:
                return c
        raise KeyError(f"unknown call type id {type_id}")


class EventKind(enum.Enum):
    CALL_ARRIVAL = "CallArrival"
    SERVICE_COMPLETE = "ServiceComplete"
    ARRIVED_AT_STATION = "ArrivedAtStation"


_EVENT_RANK = {
    EventKind.CALL_ARRIVAL: 0,
    EventKind.SERVICE_COMPLETE: 1,
    EventKind.ARRIVED_AT_STATION: 2,
}


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: EventKind
    entity_id: int


@dataclass
class CallTimeline:
    t_c: float
    dispatch_time: float = math.nan
    leg_start: float = math.nan        # when the response leg physically starts
    scene_arrival: float = math.nan
    scene_depart: float = math.nan
    hospital_arrival: Optional[float] = None
    hospital_depart: Optional[float] = None
    cleaning_arrival: Optional[float] = None
    service_end: float = math.nan


@dataclass
class AmbSnapshot:
    amb_id: int
    position: geo.GeoPoint
    trip_type: TripType
    destination: Optional[geo.GeoPoint]


@dataclass
class CallSnapshot:
    call_id: int
    position: geo.GeoPoint
    priority: Priority
    phase: str


@dataclass
class Snapshot:
    t: float
    ambulances: list[AmbSnapshot]
    calls: list[CallSnapshot]


@dataclass
class SimOutput:
    scenario_id: int
    policy_label: str
    ambulances: list[AmbulanceState]
    records: dict[int, CallRecord]
    calls: list[EmergencyCall]
    events: list[SimEvent]
    timelines: dict[int, CallTimeline]
    t_start: float
    horizon: float
    speed: float
    audit: Optional[dict] = None

    @property
    def t_end(self) -> float:
        return self.t_start + self.horizon


def _nearest(points: Sequence[geo.GeoPoint], to: geo.GeoPoint) -> geo.GeoPoint:
    return min(points, key=lambda p: geo.central_angle(to, p))


def prepare_calls(cfg: SimConfig, raw_calls: Sequence[RawCall], scenario_id: int
                  ) -> list[EmergencyCall]:
    """Materialize service classes, durations and facility choices.

    Sampling is keyed by (seed, scenario) only, so every policy simulated on
    this scenario sees the identical call stream.
    """
    rng = np.random.default_rng([cfg.seed, 7919, scenario_id])
    classes = list(DEFAULT_CLASS_PROBS.keys())
    probs = np.array([cfg.class_probs.get(c, 0.0) for c in classes])
    calls = []
    for raw in sorted(raw_calls, key=lambda r: (r.t, r.id)):
        sc = raw.service_class
        if sc is None:
            sc = classes[int(rng.choice(len(classes), p=probs))]
        on_scene = cfg.on_scene.sample(rng)
        hospital = at_hospital = cleaning = cleaning_t = None
        if sc.to_hospital:
            hospital = _nearest(cfg.hospitals, raw.loc)
            at_hospital = cfg.at_hospital.sample(rng)
        if sc.to_cleaning:
            anchor = hospital if hospital is not None else raw.loc
            cleaning = _nearest(cfg.cleaning_stations or cfg.stations, anchor)
            cleaning_t = cfg.cleaning.sample(rng)
        calls.append(EmergencyCall(
            id=raw.id, t_c=raw.t, loc=raw.loc,
            call_type=cfg.call_type_by_id(raw.call_type_id),
            service_class=sc, time_on_scene=on_scene,
            hospital=hospital, time_at_hospital=at_hospital,
            cleaning_station=cleaning, cleaning_time=cleaning_t,
        ))
    return calls


@dataclass
class ServiceSchedule:
    case: str
    start_position: geo.GeoPoint
    leg_start: float
    nodes: list[tuple[geo.GeoPoint, float, TripType]]  # appended (loc, time, segment type)
    waiting_on_scene: float
    waiting_to_hospital: Optional[float]
    completion_t: float
    completion_loc: geo.GeoPoint
    scene_arrival: float
    scene_depart: float
    hospital_arrival: Optional[float]
    hospital_depart: Optional[float]
    cleaning_arrival: Optional[float]


def compute_service_schedule(state, call: EmergencyCall, now: float, router: Router
                             ) -> ServiceSchedule:
    """Deterministic full service schedule for dispatching ``state`` to
    ``call`` at decision time ``now``. Works on any object exposing the
    state vector fields (real states and policy projections alike)."""
    est = response_time_estimate(state, call, now, router)
    leg_start = state.t_f if est.case == "C" else now
    scene_arrival = leg_start + est.travel
    nodes = [(call.loc, scene_arrival, TripType.TO_SCENE)]
    scene_depart = scene_arrival + call.time_on_scene
    nodes.append((call.loc, scene_depart, TripType.ON_SCENE))
    hospital_arrival = hospital_depart = cleaning_arrival = None
    waiting_to_hospital = None
    cursor_loc, cursor_t = call.loc, scene_depart
    if call.service_class.to_hospital:
        travel_h = router.travel_time(call.loc, call.hospital, scene_depart)
        hospital_arrival = scene_depart + travel_h
        waiting_to_hospital = call.time_on_scene + travel_h
        nodes.append((call.hospital, hospital_arrival, TripType.TO_HOSPITAL))
        hospital_depart = hospital_arrival + call.time_at_hospital
        nodes.append((call.hospital, hospital_depart, TripType.AT_HOSPITAL))
        cursor_loc, cursor_t = call.hospital, hospital_depart
    if call.service_class.to_cleaning:
        travel_c = router.travel_time(cursor_loc, call.cleaning_station, cursor_t)
        cleaning_arrival = cursor_t + travel_c
        nodes.append((call.cleaning_station, cleaning_arrival, TripType.TO_CLEANING))
        done = cleaning_arrival + call.cleaning_time
        nodes.append((call.cleaning_station, done, TripType.CLEANING))
        cursor_loc, cursor_t = call.cleaning_station, done
    return ServiceSchedule(
        case=est.case, start_position=est.position, leg_start=leg_start, nodes=nodes,
        waiting_on_scene=est.duration, waiting_to_hospital=waiting_to_hospital,
        completion_t=cursor_t, completion_loc=cursor_loc,
        scene_arrival=scene_arrival, scene_depart=scene_depart,
        hospital_arrival=hospital_arrival, hospital_depart=hospital_depart,
        cleaning_arrival=cleaning_arrival,
    )


class _Engine:
    def __init__(self, cfg: SimConfig, calls: list[EmergencyCall], policy: PolicyId,
                 scenario_id: int):
        self.cfg = cfg
        self.policy = policy
        self.scenario_id = scenario_id
        self.router = cfg.router
        self.calls = sorted(calls, key=lambda c: (c.t_c, c.id))
        self.calls_by_id = {c.id: c for c in self.calls}
        self.states: dict[int, AmbulanceState] = {}
        for spec in cfg.ambulances:
            station = cfg.stations[spec.station]
            home = cfg.stations[spec.home] if spec.home is not None else None
            self.states[spec.id] = AmbulanceState(
                id=spec.id, amb_type=spec.amb_type,
                t_f=cfg.t_start, loc_f=station, t_b=cfg.t_start, loc_b=station,
                home_base=home, trips=[station], times=[cfg.t_start], types=[],
            )
        self.queue: list[EmergencyCall] = []
        self.assigned: set[int] = set()
        self.records: dict[int, CallRecord] = {}
        self.timelines: dict[int, CallTimeline] = {}
        self.events: list[SimEvent] = []
        self.audit: Optional[dict] = {"decisions": [], "dispatches": [],
                                      "ghp1_order": []} if cfg.audit else None
        self._heap: list = []
        self._seq = 0

    # -- event plumbing -------------------------------------------------------

    def _push(self, t: float, kind: EventKind, entity: int) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, _EVENT_RANK[kind], entity, self._seq, kind))

    def _context(self, now: float) -> PolicyContext:
        views = {s.id: AmbView.of(s, committed=False) for s in self.states.values()}
        window_end = now + self.policy.nm_window
        future = [c for c in self.calls
                  if now < c.t_c <= window_end and c.id not in self.assigned]
        return PolicyContext(
            now=now, views=views, queue=list(self.queue),
            cost_model=self.cfg.cost_model, router=self.router,
            completion_fn=self._completion_of, future_calls=future,
            use_home_base=self.cfg.use_home_base, stations=self.cfg.stations,
            audit=self.audit,
        )

    def _completion_of(self, view: AmbView, call: EmergencyCall, now: float
                       ) -> tuple[float, geo.GeoPoint]:
        sched = compute_service_schedule(view, call, now, self.router)
        return sched.completion_t, sched.completion_loc

    # -- decision application ---------------------------------------------------

    def _apply(self, decisions: list[DispatchDecision], now: float) -> None:
        for d in decisions:
            if d.kind == DecisionKind.DISPATCH_NOW or d.kind == DecisionKind.DISPATCH_AFTER_SERVICE:
                self._dispatch(d.amb_id, self.calls_by_id[d.call_id], now)
            elif d.kind == DecisionKind.QUEUE:
                call = self.calls_by_id[d.call_id]
                if call.id not in self.assigned and call not in self.queue:
                    self.queue.append(call)
            elif d.kind == DecisionKind.TO_STATION:
                self._to_station(d.amb_id, d.station, now)

    def _dispatch(self, amb_id: int, call: EmergencyCall, now: float) -> None:
        s = self.states[amb_id]
        t_f_before, t_b_before = s.t_f, s.t_b
        loc_f_before, loc_b_before = s.loc_f, s.loc_b
        try:
            sched = compute_service_schedule(s, call, now, self.router)
        except Unreachable as exc:
            self._mark_failed(call, str(exc))
            return
        # close or truncate the segment the ambulance is currently on
        if sched.case == "A":
            if now > s.times[-1]:
                s.trips.append(s.loc_b)
                s.times.append(now)
                s.types.append(TripType.AT_STATION)
        elif sched.case == "B" and s.t_b != FAR_FUTURE:
            # redirected while heading to a station: the station-bound leg now
            # ends at the current position at the decision instant
            s.trips[-1] = sched.start_position
            s.times[-1] = now
        for loc, t, trip_type in sched.nodes:
            s.trips.append(loc)
            s.times.append(t)
            s.types.append(trip_type)
        s.t_f = sched.completion_t
        s.loc_f = sched.completion_loc
        s.t_b = FAR_FUTURE
        self._push(sched.completion_t, EventKind.SERVICE_COMPLETE, amb_id)

        theta = self.cfg.cost_model.theta_for(call.call_type)
        self.records[call.id] = CallRecord(
            call_id=call.id,
            waiting_on_scene=sched.waiting_on_scene,
            waiting_on_scene_penalized=theta * sched.waiting_on_scene,
            serving_ambulance=amb_id,
            allocation_cost=allocation_cost(s.amb_type, call.call_type,
                                            sched.waiting_on_scene, self.cfg.cost_model),
            waiting_to_hospital=sched.waiting_to_hospital,
            waiting_to_hospital_penalized=(
                None if sched.waiting_to_hospital is None
                else theta * sched.waiting_to_hospital),
        )
        self.timelines[call.id] = CallTimeline(
            t_c=call.t_c, dispatch_time=now, leg_start=sched.leg_start,
            scene_arrival=sched.scene_arrival, scene_depart=sched.scene_depart,
            hospital_arrival=sched.hospital_arrival, hospital_depart=sched.hospital_depart,
            cleaning_arrival=sched.cleaning_arrival, service_end=sched.completion_t,
        )
        self.assigned.add(call.id)
        if call in self.queue:
            self.queue.remove(call)
        if self.audit is not None:
            self.audit["dispatches"].append({
                "call_id": call.id, "amb_id": amb_id, "now": now,
                "case": sched.case,
                "position": (sched.start_position.lat, sched.start_position.lon),
                "waiting_on_scene": sched.waiting_on_scene,
                "t_f_before": t_f_before, "t_b_before": t_b_before,
                "loc_f_before": (loc_f_before.lat, loc_f_before.lon),
                "loc_b_before": (loc_b_before.lat, loc_b_before.lon),
            })

    def _mark_failed(self, call: EmergencyCall, reason: str) -> None:
        self.records[call.id] = CallRecord(
            call_id=call.id, waiting_on_scene=-1.0, waiting_on_scene_penalized=-1.0,
            serving_ambulance=-1, allocation_cost=-1.0,
        )
        self.timelines[call.id] = CallTimeline(t_c=call.t_c)
        self.assigned.add(call.id)
        if call in self.queue:
            self.queue.remove(call)

    def _to_station(self, amb_id: int, station: geo.GeoPoint, now: float) -> None:
        s = self.states[amb_id]
        travel = self.router.travel_time(s.loc_f, station, now)
        s.loc_b = station
        s.t_b = now + travel
        if travel > 0:
            s.trips.append(station)
            s.times.append(s.t_b)
            s.types.append(TripType.TO_STATION)
        self._push(s.t_b, EventKind.ARRIVED_AT_STATION, amb_id)

    # -- event handlers -----------------------------------------------------------

    def _on_call_arrival(self, call: EmergencyCall, now: float) -> None:
        if call.id in self.assigned:
            return  # pre-committed by a look-ahead policy
        decisions = policy_on_call(self.policy, self._context(now), call)
        self._apply(decisions, now)
        if call.id not in self.assigned and call not in self.queue:
            self.queue.append(call)

    def _on_service_complete(self, amb_id: int, now: float) -> None:
        decisions = policy_on_free(self.policy, self._context(now), amb_id)
        self._apply(decisions, now)

    def run(self) -> SimOutput:
        for call in self.calls:
            self._push(call.t_c, EventKind.CALL_ARRIVAL, call.id)
        while self._heap:
            t, _rank, entity, _seq, kind = heapq.heappop(self._heap)
            if kind == EventKind.CALL_ARRIVAL:
                self.events.append(SimEvent(t, kind, entity))
                self._on_call_arrival(self.calls_by_id[entity], t)
            elif kind == EventKind.SERVICE_COMPLETE:
                s = self.states[entity]
                if s.t_f != t:
                    continue  # superseded by a chained dispatch
                self.events.append(SimEvent(t, kind, entity))
                self._on_service_complete(entity, t)
            else:
                s = self.states[entity]
                if s.t_b != t:
                    continue  # redirected before reaching the station
                self.events.append(SimEvent(t, kind, entity))
        t_end = self.cfg.t_start + self.cfg.horizon
        for s in self.states.values():
            if s.t_b <= t_end and s.times[-1] < t_end:
                s.trips.append(s.loc_b)
                s.times.append(t_end)
                s.types.append(TripType.AT_STATION)
        for call in self.calls:
            if call.id not in self.assigned:
                self._mark_failed(call, "not served by end of scenario")
        return SimOutput(
            scenario_id=self.scenario_id, policy_label=self.policy.label,
            ambulances=[self.states[k] for k in sorted(self.states)],
            records=self.records, calls=self.calls, events=self.events,
            timelines=self.timelines, t_start=self.cfg.t_start,
            horizon=self.cfg.horizon, speed=self.cfg.speed, audit=self.audit,
        )


def run_scenario(cfg: SimConfig, calls: Sequence, rng=None,
                 policy: Optional[PolicyId] = None, scenario_id: int = 0) -> SimOutput:
    """Simulate one scenario under one policy.

    ``calls`` may be RawCall records (service data is then materialized
    deterministically from the config seed) or fully prepared
    EmergencyCall objects.
    """
    if calls and isinstance(calls[0], RawCall):
        calls = prepare_calls(cfg, calls, scenario_id)
    engine = _Engine(cfg, list(calls), policy or cfg.policy, scenario_id)
    return engine.run()


def run_batch(cfg: SimConfig, scenarios: Sequence[Sequence[RawCall]],
              policies: Sequence[PolicyId]) -> list[SimOutput]:
    """Cartesian product of scenarios x policies over identical call streams."""
    if not scenarios or not policies:
        raise ValueError("need at least one scenario and one policy")
    outputs = []
    for sid, raw in enumerate(scenarios):
        prepared = prepare_calls(cfg, raw, sid) if (raw and isinstance(raw[0], RawCall)) \
            else list(raw)
        for policy in policies:
            outputs.append(run_scenario(cfg, prepared, policy=policy, scenario_id=sid))
    return outputs


_MOVING = (TripType.TO_SCENE, TripType.TO_HOSPITAL, TripType.TO_CLEANING,
           TripType.TO_STATION)


def position_on_arrays(trips: Sequence[geo.GeoPoint], times: Sequence[float],
                       types: Sequence[TripType], t: float, v: float
                       ) -> tuple[geo.GeoPoint, TripType, Optional[geo.GeoPoint]]:
    """Position, activity and movement destination at time t on trip arrays."""
    if t <= times[0]:
        return trips[0], (types[0] if types else TripType.AT_STATION), None
    if t >= times[-1]:
        return trips[-1], (types[-1] if types else TripType.AT_STATION), None
    i = bisect.bisect_right(times, t) - 1
    trip_type = types[i]
    if trip_type in _MOVING and trips[i] != trips[i + 1]:
        pos = geo.position_between(trips[i], trips[i + 1], times[i], t, v)
        return pos, trip_type, trips[i + 1]
    return trips[i], trip_type, None


def _call_phase(tl: CallTimeline, t: float) -> Optional[str]:
    if math.isnan(tl.scene_arrival):
        return "waiting" if t >= tl.t_c else None
    if t < tl.t_c:
        return None
    if t < tl.scene_arrival:
        return "waiting"
    if t < tl.scene_depart:
        return "on_scene"
    if tl.hospital_arrival is not None and t < tl.hospital_arrival:
        return "to_hospital"
    if tl.hospital_depart is not None and t < tl.hospital_depart:
        return "at_hospital"
    if tl.cleaning_arrival is not None and t < tl.cleaning_arrival:
        return "to_cleaning"
    if t < tl.service_end:
        return "cleaning" if tl.cleaning_arrival is not None else "on_scene"
    return None


def snapshot(output: SimOutput, t: float) -> Snapshot:
    """Positions and statuses of all ambulances and open calls at time t."""
    if t < output.t_start or t > output.t_end:
        raise OutOfRange(f"t={t} outside [{output.t_start}, {output.t_end}]")
    ambs = []
    for s in output.ambulances:
        pos, trip_type, dest = position_on_arrays(s.trips, s.times, s.types, t, output.speed)
        if t >= s.times[-1]:
            trip_type = TripType.AT_STATION if s.t_b <= t else (
                s.types[-1] if s.types else TripType.AT_STATION)
        ambs.append(AmbSnapshot(s.id, pos, trip_type, dest))
    open_calls = []
    for call in output.calls:
        tl = output.timelines.get(call.id)
        if tl is None:
            continue
        phase = _call_phase(tl, t)
        if phase is not None:
            open_calls.append(CallSnapshot(call.id, call.loc, call.call_type.priority, phase))
    return Snapshot(t, ambs, open_calls)
