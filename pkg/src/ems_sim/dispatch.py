"""Allocation costs and the five dispatch policies.

The cost of sending an ambulance of type a to a call of type c with
response time t is theta_c * t + M[a, c]: a time penalty weighted by call
urgency plus a capability-mismatch term. Policies are deterministic pure
functions of the decision context; all tie-breaks are fixed (least advanced
ambulance, then lowest id; lowest call id).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from ems_sim import geo
from ems_sim.domain import (
    Availability,
    AmbulanceState,
    AmbulanceType,
    CallType,
    EmergencyCall,
    FAR_FUTURE,
    availability,
)
from ems_sim.errors import EmptyFleet, InvalidDuration, UnknownTypePair

DEFAULT_MISMATCH_PENALTY = 1e4


@dataclass(frozen=True)
class CostModel:
    theta: dict[int, float]                 # call type id -> urgency weight
    M: dict[tuple[int, int], float]         # (ambulance type id, call type id) -> cost

    def theta_for(self, c: CallType) -> float:
        return self.theta.get(c.id, c.theta)

    @staticmethod
    def build(call_types: Sequence[CallType], amb_types: Sequence[AmbulanceType],
              mismatch_penalty: float = DEFAULT_MISMATCH_PENALTY,
              overrides: Optional[dict[tuple[int, int], float]] = None) -> "CostModel":
        """Zero mismatch cost when the ambulance rank covers the call's
        required rank, a flat penalty otherwise; explicit overrides win."""
        m: dict[tuple[int, int], float] = {}
        for a in amb_types:
            for c in call_types:
                m[(a.id, c.id)] = 0.0 if a.rank >= c.required_rank else mismatch_penalty
        if overrides:
            m.update(overrides)
        return CostModel(theta={c.id: c.theta for c in call_types}, M=m)

    def scaled(self, factor: float) -> "CostModel":
        return CostModel(
            theta={k: v * factor for k, v in self.theta.items()},
            M={k: v * factor for k, v in self.M.items()},
        )


def penalization(t: float, c: CallType, model: Optional[CostModel] = None) -> float:
    """Urgency-weighted waiting penalty theta_c * t."""
    if t < 0:
        raise InvalidDuration(f"duration must be nonnegative, got {t}")
    theta = model.theta_for(c) if model is not None else c.theta
    return theta * t


def allocation_cost(a: AmbulanceType, c: CallType, t: float, m: CostModel) -> float:
    """Response-time penalty plus the capability mismatch term."""
    key = (a.id, c.id)
    if key not in m.M:
        raise UnknownTypePair(f"no mismatch cost for ambulance type {a.id}, call type {c.id}")
    return penalization(t, c, m) + m.M[key]


class PolicyName(str, enum.Enum):
    CA = "CA"
    BM = "BM"
    NM = "NM"
    GHP1 = "GHP1"
    GHP2 = "GHP2"


@dataclass(frozen=True)
class PolicyId:
    name: PolicyName
    nm_window: float = 3600.0  # how far ahead NM sees arriving calls, seconds

    def __post_init__(self):
        if self.name == PolicyName.NM and self.nm_window <= 0:
            raise ValueError("NM window must be positive")

    @property
    def label(self) -> str:
        return self.name.value

    @staticmethod
    def parse(text: str) -> "PolicyId":
        text = text.strip()
        if ":" in text:
            name, window = text.split(":", 1)
            return PolicyId(PolicyName(name.strip().upper()), float(window))
        return PolicyId(PolicyName(text.upper()))


ALL_POLICIES = tuple(PolicyId(n) for n in PolicyName)


class DecisionKind(enum.Enum):
    DISPATCH_NOW = "DispatchNow"
    DISPATCH_AFTER_SERVICE = "DispatchAfterService"
    QUEUE = "Queue"
    TO_STATION = "ToStation"
    IDLE = "Idle"


@dataclass(frozen=True)
class DispatchDecision:
    kind: DecisionKind
    amb_id: Optional[int] = None
    call_id: Optional[int] = None
    station: Optional[geo.GeoPoint] = None


@dataclass
class Estimate:
    duration: float             # waiting from the call instant to scene arrival
    position: geo.GeoPoint      # where the response leg starts
    case: str                   # "A", "B" or "C"
    travel: float               # travel seconds of the response leg


def response_time_estimate(s, call: EmergencyCall, now: float, router) -> Estimate:
    """Forecast waiting-on-scene for ambulance state ``s`` deciding at ``now``.

    Case A: at a station; case B: between services, heading to a station,
    redirected from its interpolated position; case C: still busy, responds
    from its service-completion point at t_f. The returned duration is
    measured from the call instant, so for queued calls it includes the time
    already waited.
    """
    avail = availability(s, now)
    if avail == Availability.AT_STATION:
        travel = router.travel_time(s.loc_b, call.loc, now)
        return Estimate((now - call.t_c) + travel, s.loc_b, "A", travel)
    if avail == Availability.EN_ROUTE_TO_STATION:
        if now <= s.t_f or s.t_b == FAR_FUTURE:
            pos = s.loc_f       # just freed, no station leg under way yet
        else:
            pos = geo.position_between(s.loc_f, s.loc_b, s.t_f, now, router.v)
        travel = router.travel_time(pos, call.loc, now)
        return Estimate((now - call.t_c) + travel, pos, "B", travel)
    travel = router.travel_time(s.loc_f, call.loc, s.t_f)
    return Estimate((s.t_f - call.t_c) + travel, s.loc_f, "C", travel)


@dataclass
class AmbView:
    """Projected per-ambulance state used while a policy reasons about one
    decision epoch."""

    id: int
    amb_type: AmbulanceType
    t_f: float
    loc_f: geo.GeoPoint
    t_b: float
    loc_b: geo.GeoPoint
    home_base: Optional[geo.GeoPoint] = None
    committed: bool = False

    @staticmethod
    def of(s: AmbulanceState, committed: bool) -> "AmbView":
        return AmbView(s.id, s.amb_type, s.t_f, s.loc_f, s.t_b, s.loc_b, s.home_base, committed)


@dataclass
class PolicyContext:
    """Everything a policy may consult for one decision epoch."""

    now: float
    views: dict[int, AmbView]
    queue: list[EmergencyCall]          # pending (unassigned, already arrived) calls
    cost_model: CostModel
    router: object
    # (view, call, dispatch time) -> (completion time, completion location)
    completion_fn: Callable[[AmbView, EmergencyCall, float], tuple[float, geo.GeoPoint]]
    future_calls: list[EmergencyCall] = field(default_factory=list)
    use_home_base: bool = False
    stations: list[geo.GeoPoint] = field(default_factory=list)
    audit: Optional[dict] = None

    def candidates(self) -> list[AmbView]:
        free = [v for v in self.views.values() if not v.committed]
        if not self.views:
            raise EmptyFleet("no ambulances configured")
        return free

    def cost_of(self, view: AmbView, call: EmergencyCall, at: Optional[float] = None) -> tuple[float, Estimate]:
        est = response_time_estimate(view, call, self.now if at is None else at, self.router)
        return allocation_cost(view.amb_type, call.call_type, est.duration, self.cost_model), est

    def project_dispatch(self, view: AmbView, call: EmergencyCall) -> None:
        t_done, loc_done = self.completion_fn(view, call, self.now)
        view.t_f = t_done
        view.loc_f = loc_done
        view.t_b = FAR_FUTURE
        view.committed = True


def _most_basic(views: Sequence[AmbView]) -> AmbView:
    return min(views, key=lambda v: (v.amb_type.rank, v.id))


def _is_free(v: AmbView, now: float) -> bool:
    return availability(v, now) != Availability.BUSY


def _record_audit(ctx: PolicyContext, call: EmergencyCall, costs: dict, chosen: Optional[int],
                  cases: dict) -> None:
    if ctx.audit is not None:
        ctx.audit.setdefault("decisions", []).append({
            "call_id": call.id,
            "now": ctx.now,
            "costs": dict(costs),
            "cases": dict(cases),
            "chosen": chosen,
        })


# -- CA ----------------------------------------------------------------------

def _ca_on_call(ctx: PolicyContext, call: EmergencyCall) -> list[DispatchDecision]:
    free = [v for v in ctx.candidates() if _is_free(v, ctx.now)]
    if not free:
        return [DispatchDecision(DecisionKind.QUEUE, call_id=call.id)]
    scored = []
    for v in free:
        est = response_time_estimate(v, call, ctx.now, ctx.router)
        scored.append((est.duration, v.id, v))
    scored.sort(key=lambda x: (x[0], x[1]))
    chosen = scored[0][2]
    _record_audit(ctx, call, {s[1]: s[0] for s in scored}, chosen.id, {})
    ctx.project_dispatch(chosen, call)
    return [DispatchDecision(DecisionKind.DISPATCH_NOW, amb_id=chosen.id, call_id=call.id)]


# -- BM ----------------------------------------------------------------------

def _bm_on_call(ctx: PolicyContext, call: EmergencyCall) -> list[DispatchDecision]:
    cands = ctx.candidates()
    if not cands:
        return [DispatchDecision(DecisionKind.QUEUE, call_id=call.id)]
    costs, cases = {}, {}
    scored = []
    for v in cands:
        cost, est = ctx.cost_of(v, call)
        costs[v.id] = cost
        cases[v.id] = est.case
        scored.append((cost, v.amb_type.rank, v.id, v))
    scored.sort(key=lambda x: (x[0], x[1], x[2]))
    chosen = scored[0][3]
    _record_audit(ctx, call, costs, chosen.id, cases)
    busy = availability(chosen, ctx.now) == Availability.BUSY
    ctx.project_dispatch(chosen, call)
    if busy:
        return [DispatchDecision(DecisionKind.DISPATCH_AFTER_SERVICE, amb_id=chosen.id,
                                 call_id=call.id)]
    return [DispatchDecision(DecisionKind.DISPATCH_NOW, amb_id=chosen.id, call_id=call.id)]


# -- NM ----------------------------------------------------------------------

def _nm_best_set(ctx: PolicyContext, call: EmergencyCall, at: Optional[float] = None
                 ) -> tuple[list[AmbView], dict[int, float]]:
    cands = [v for v in ctx.views.values() if not v.committed]
    costs = {}
    for v in cands:
        cost, _ = ctx.cost_of(v, call, at=at)
        costs[v.id] = cost
    if not costs:
        return [], {}
    best = min(costs.values())
    return [v for v in cands if costs[v.id] == best], costs


def _nm_process(ctx: PolicyContext, pending: list[EmergencyCall]) -> list[DispatchDecision]:
    decisions: list[DispatchDecision] = []
    assigned: set[int] = set()
    for call in sorted(pending, key=lambda c: (c.t_c, c.id)):
        if call.id in assigned:
            continue
        best_set, costs = _nm_best_set(ctx, call)
        if not best_set:
            decisions.append(DispatchDecision(DecisionKind.QUEUE, call_id=call.id))
            continue
        free = [v for v in best_set if _is_free(v, ctx.now)]
        if free:
            chosen = _most_basic(free)
            _record_audit(ctx, call, costs, chosen.id, {})
            ctx.project_dispatch(chosen, call)
            assigned.add(call.id)
            decisions.append(DispatchDecision(DecisionKind.DISPATCH_NOW, amb_id=chosen.id,
                                              call_id=call.id))
            continue
        # every cost-minimal ambulance is busy: look ahead at the calls each
        # one would also be best for, and only reserve it for this call when
        # no upcoming call would be a cheaper use of it
        horizon_calls = [
            k for k in list(pending) + list(ctx.future_calls)
            if k.id != call.id and k.id not in assigned
        ]
        good_choice = None
        fallback = None
        for j in sorted(best_set, key=lambda v: (v.amb_type.rank, v.id)):
            competing = []
            for k in horizon_calls:
                if k.t_c > j.t_f:
                    continue
                k_best, _ = _nm_best_set(ctx, k, at=max(ctx.now, k.t_c))
                if any(v.id == j.id for v in k_best):
                    competing.append(k)
            cost_here = costs[j.id]
            if all(ctx.cost_of(j, k, at=max(ctx.now, k.t_c))[0] >= cost_here for k in competing):
                good_choice = j
                break
            if fallback is None:
                best_k = min(competing,
                             key=lambda k: (ctx.cost_of(j, k, at=max(ctx.now, k.t_c))[0], k.id))
                fallback = (j, best_k)
        if good_choice is not None:
            _record_audit(ctx, call, costs, good_choice.id, {})
            ctx.project_dispatch(good_choice, call)
            assigned.add(call.id)
            decisions.append(DispatchDecision(DecisionKind.DISPATCH_AFTER_SERVICE,
                                              amb_id=good_choice.id, call_id=call.id))
        else:
            j, best_k = fallback
            ctx.project_dispatch(j, best_k)
            assigned.add(best_k.id)
            decisions.append(DispatchDecision(DecisionKind.DISPATCH_AFTER_SERVICE,
                                              amb_id=j.id, call_id=best_k.id))
            decisions.append(DispatchDecision(DecisionKind.QUEUE, call_id=call.id))
    return decisions


# -- GHP1 ---------------------------------------------------------------------

def _ghp1_process(ctx: PolicyContext, pending: list[EmergencyCall]) -> list[DispatchDecision]:
    decisions: list[DispatchDecision] = []
    order = sorted(
        pending,
        key=lambda c: (-penalization(ctx.now - c.t_c, c.call_type, ctx.cost_model),
                       c.t_c, c.id),
    )
    if ctx.audit is not None:
        ctx.audit.setdefault("ghp1_order", []).append(
            {"now": ctx.now, "order": [c.id for c in order]}
        )
    for call in order:
        cands = [v for v in ctx.views.values() if not v.committed]
        if not cands:
            decisions.append(DispatchDecision(DecisionKind.QUEUE, call_id=call.id))
            continue
        costs = {}
        for v in cands:
            costs[v.id], _ = ctx.cost_of(v, call)
        best = min(costs.values())
        best_free = [v for v in cands if costs[v.id] == best and _is_free(v, ctx.now)]
        if best_free:
            chosen = _most_basic(best_free)
            _record_audit(ctx, call, costs, chosen.id, {})
            ctx.project_dispatch(chosen, call)
            decisions.append(DispatchDecision(DecisionKind.DISPATCH_NOW, amb_id=chosen.id,
                                              call_id=call.id))
        else:
            decisions.append(DispatchDecision(DecisionKind.QUEUE, call_id=call.id))
    return decisions


# -- GHP2 ---------------------------------------------------------------------

def _ghp2_process(ctx: PolicyContext, pending: list[EmergencyCall]) -> list[DispatchDecision]:
    decisions: list[DispatchDecision] = []
    active = sorted(pending, key=lambda c: c.id)
    while active:
        min_alloc: dict[int, float] = {}
        best_sets: dict[int, list[AmbView]] = {}
        for call in active:
            cands = [v for v in ctx.views.values() if not v.committed]
            if not cands:
                break
            costs = {v.id: ctx.cost_of(v, call)[0] for v in cands}
            best = min(costs.values())
            min_alloc[call.id] = best
            best_sets[call.id] = [v for v in cands if costs[v.id] == best]
        if not min_alloc:
            for call in active:
                decisions.append(DispatchDecision(DecisionKind.QUEUE, call_id=call.id))
            break
        top = max(min_alloc.values())
        cand_calls = [c for c in active if min_alloc[c.id] == top]
        serveable = [
            c for c in cand_calls
            if any(_is_free(v, ctx.now) for v in best_sets[c.id])
        ]
        if not serveable:
            deferred = min(cand_calls, key=lambda c: c.id)
            active.remove(deferred)
            decisions.append(DispatchDecision(DecisionKind.QUEUE, call_id=deferred.id))
            continue
        current = min(serveable, key=lambda c: c.id)
        chosen = _most_basic([v for v in best_sets[current.id] if _is_free(v, ctx.now)])
        _record_audit(ctx, current, {v.id: min_alloc[current.id] for v in best_sets[current.id]},
                      chosen.id, {})
        ctx.project_dispatch(chosen, current)
        active.remove(current)
        decisions.append(DispatchDecision(DecisionKind.DISPATCH_NOW, amb_id=chosen.id,
                                          call_id=current.id))
    return decisions


# -- shared free-ambulance handling -------------------------------------------

def _closest_station(ctx: PolicyContext, view: AmbView) -> geo.GeoPoint:
    if view.home_base is not None and ctx.use_home_base:
        return view.home_base
    best, best_t = None, None
    for s in ctx.stations:
        t = ctx.router.travel_time(view.loc_f, s, ctx.now)
        if best_t is None or t < best_t:
            best, best_t = s, t
    return best


def _oldest_queued(ctx: PolicyContext) -> Optional[EmergencyCall]:
    if not ctx.queue:
        return None
    return min(ctx.queue, key=lambda c: (c.t_c, c.id))


def policy_on_call(policy: PolicyId, ctx: PolicyContext, call: EmergencyCall
                   ) -> list[DispatchDecision]:
    """Decisions for a freshly arrived call (the engine applies them)."""
    if not ctx.views:
        raise EmptyFleet("no ambulances configured")
    if policy.name == PolicyName.CA:
        return _ca_on_call(ctx, call)
    if policy.name == PolicyName.BM:
        return _bm_on_call(ctx, call)
    if policy.name == PolicyName.NM:
        return _nm_process(ctx, ctx.queue + [call])
    if policy.name == PolicyName.GHP1:
        return _ghp1_process(ctx, ctx.queue + [call])
    return _ghp2_process(ctx, ctx.queue + [call])


def policy_on_free(policy: PolicyId, ctx: PolicyContext, amb_id: int,
                   ) -> list[DispatchDecision]:
    """Decisions when an ambulance completes service at ctx.now = its t_f."""
    if not ctx.views:
        raise EmptyFleet("no ambulances configured")
    view = ctx.views[amb_id]
    if policy.name in (PolicyName.CA, PolicyName.BM):
        call = _oldest_queued(ctx)
        if call is not None:
            ctx.project_dispatch(view, call)
            return [DispatchDecision(DecisionKind.DISPATCH_NOW, amb_id=amb_id, call_id=call.id)]
        return [DispatchDecision(DecisionKind.TO_STATION, amb_id=amb_id,
                                 station=_closest_station(ctx, view))]
    if policy.name == PolicyName.NM:
        decisions = _nm_process(ctx, list(ctx.queue))
    elif policy.name == PolicyName.GHP1:
        decisions = _ghp1_process(ctx, list(ctx.queue))
    else:
        decisions = _ghp2_process(ctx, list(ctx.queue))
    used = {d.amb_id for d in decisions
            if d.kind in (DecisionKind.DISPATCH_NOW, DecisionKind.DISPATCH_AFTER_SERVICE)}
    if amb_id not in used:
        decisions.append(DispatchDecision(DecisionKind.TO_STATION, amb_id=amb_id,
                                          station=_closest_station(ctx, view)))
    return decisions
