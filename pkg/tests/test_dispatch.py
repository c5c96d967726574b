import math

import numpy as np
import pytest

from ems_sim import geo
from ems_sim.dispatch import (
    AmbView,
    CostModel,
    DecisionKind,
    PolicyContext,
    PolicyId,
    PolicyName,
    allocation_cost,
    penalization,
    policy_on_call,
    policy_on_free,
    response_time_estimate,
)
from ems_sim.domain import (
    AmbulanceState,
    CallType,
    EmergencyCall,
    FAR_FUTURE,
    Priority,
    ServiceClass,
)
from ems_sim.errors import EmptyFleet, InvalidDuration, UnknownTypePair
from ems_sim.geo import GeoPoint
from ems_sim.sim import compute_service_schedule
from ems_sim.streets import Router

from conftest import AMB_TYPES, CALL_TYPES, make_cost_model

LOW, MID, HIGH = CALL_TYPES
BLS, ILS, ALS = AMB_TYPES
STATION_A = GeoPoint(0.0, 0.0)
STATION_B = GeoPoint(0.0, 0.2)


def call_at(loc, t_c=0.0, call_type=LOW, call_id=0, sc=ServiceClass.C4):
    return EmergencyCall(call_id, t_c, loc, call_type, sc, time_on_scene=300.0)


def view(amb_id, amb_type=BLS, t_f=0.0, loc_f=STATION_A, t_b=0.0, loc_b=STATION_A,
         home=None):
    return AmbView(amb_id, amb_type, t_f, loc_f, t_b, loc_b, home)


def make_ctx(views, now=0.0, queue=None, future=None, cost_model=None, router=None,
             stations=None, use_home_base=False, audit=None):
    router = router or Router(None, 60.0)

    def completion(v, call, t):
        sched = compute_service_schedule(v, call, t, router)
        return sched.completion_t, sched.completion_loc

    return PolicyContext(
        now=now, views={v.id: v for v in views}, queue=list(queue or []),
        cost_model=cost_model or make_cost_model(), router=router,
        completion_fn=completion, future_calls=list(future or []),
        use_home_base=use_home_base, stations=stations or [STATION_A, STATION_B],
        audit=audit,
    )


class TestPenalization:
    def test_zero_duration(self):
        assert penalization(0.0, HIGH) == 0.0

    def test_high_priority_rate(self):
        assert penalization(600.0, HIGH) == 2400.0

    def test_low_priority_rate(self):
        assert penalization(300.0, LOW) == 300.0

    def test_negative_duration_rejected(self):
        with pytest.raises(InvalidDuration):
            penalization(-1.0, LOW)


class TestAllocationCost:
    def test_zero_mismatch_equals_penalization(self):
        m = make_cost_model()
        assert allocation_cost(BLS, MID, 100.0, m) == penalization(100.0, MID)

    def test_direct_sum(self):
        m = make_cost_model(overrides={(BLS.id, MID.id): 50.0})
        assert allocation_cost(BLS, MID, 100.0, m) == 2 * 100.0 + 50.0

    def test_unknown_pair(self):
        m = CostModel(theta={0: 1.0}, M={})
        with pytest.raises(UnknownTypePair):
            allocation_cost(BLS, LOW, 10.0, m)

    def test_argmin_matches_response_time_argmin_when_m_zero(self, rng):
        m = make_cost_model()
        for _ in range(50):
            times = rng.uniform(0, 3600, size=5)
            costs = [allocation_cost(BLS, MID, t, m) for t in times]
            assert int(np.argmin(costs)) == int(np.argmin(times))


class TestResponseTimeEstimate:
    def test_case_a_from_station(self):
        router = Router(None, 60.0)
        scene = GeoPoint(0.0, 0.0899321605918)   # roughly 10 km east on the equator
        v = view(0, t_f=0.0, t_b=0.0)
        call = call_at(scene, t_c=100.0)
        est = response_time_estimate(v, call, 100.0, router)
        assert est.case == "A"
        assert est.duration == pytest.approx(600.0, rel=1e-3)  # 10 km at 60 km/h

    def test_case_b_boundary_just_freed(self):
        router = Router(None, 60.0)
        freed_at = GeoPoint(0.05, 0.05)
        v = view(0, t_f=500.0, loc_f=freed_at, t_b=FAR_FUTURE)
        call = call_at(GeoPoint(0.08, 0.08), t_c=500.0)
        est = response_time_estimate(v, call, 500.0, router)
        assert est.case == "B"
        assert est.position == freed_at
        assert est.duration == pytest.approx(
            router.travel_time(freed_at, call.loc, 500.0), rel=1e-12)

    def test_case_b_midway_position(self):
        router = Router(None, 60.0)
        v = view(0, t_f=0.0, loc_f=STATION_A, t_b=geo.travel_time_gc(
            STATION_A, STATION_B, 0, 60.0), loc_b=STATION_B)
        call = call_at(GeoPoint(0.05, 0.1), t_c=v.t_b / 2)
        est = response_time_estimate(v, call, v.t_b / 2, router)
        expected_pos = geo.position_between(STATION_A, STATION_B, 0.0, v.t_b / 2, 60.0)
        assert est.case == "B"
        assert est.position.lat == pytest.approx(expected_pos.lat, abs=1e-12)
        assert est.position.lon == pytest.approx(expected_pos.lon, abs=1e-12)

    def test_case_c_adds_remaining_service(self):
        router = Router(None, 60.0)
        v = view(0, t_f=900.0, loc_f=GeoPoint(0.01, 0.01), t_b=FAR_FUTURE)
        call = call_at(GeoPoint(0.03, 0.03), t_c=600.0)
        est = response_time_estimate(v, call, 600.0, router)
        onward = router.travel_time(v.loc_f, call.loc, 900.0)
        assert est.case == "C"
        assert est.duration == pytest.approx(300.0 + onward, rel=1e-12)

    def test_queued_call_includes_elapsed_wait(self):
        router = Router(None, 60.0)
        v = view(0)
        call = call_at(GeoPoint(0.02, 0.02), t_c=0.0)
        est = response_time_estimate(v, call, 120.0, router)
        assert est.duration == pytest.approx(
            120.0 + router.travel_time(STATION_A, call.loc, 120.0), rel=1e-12)


class TestClosestAvailable:
    def test_queue_when_everyone_busy(self):
        v0 = view(0, t_f=1000.0, t_b=FAR_FUTURE)
        ctx = make_ctx([v0], now=10.0)
        decisions = policy_on_call(PolicyId(PolicyName.CA), ctx, call_at(STATION_B, 10.0))
        assert decisions == [d for d in decisions if d.kind == DecisionKind.QUEUE]

    def test_picks_closer_of_two(self):
        # 5 km vs 8 km from the call, equal speeds
        near = view(0, loc_b=GeoPoint(0.0, 0.045), t_b=0.0)
        far = view(1, loc_b=GeoPoint(0.0, 0.072), t_b=0.0)
        call = call_at(GeoPoint(0.0, 0.0), t_c=0.0, call_id=5)
        ctx = make_ctx([far, near])
        decisions = policy_on_call(PolicyId(PolicyName.CA), ctx, call)
        assert decisions[0].kind == DecisionKind.DISPATCH_NOW
        assert decisions[0].amb_id == 0

    def test_single_ambulance_any_policy(self):
        call = call_at(GeoPoint(0.01, 0.01), t_c=0.0, call_id=1)
        for name in PolicyName:
            ctx = make_ctx([view(0)])
            decisions = policy_on_call(PolicyId(name), ctx, call)
            dispatched = [d for d in decisions if d.kind == DecisionKind.DISPATCH_NOW]
            assert len(dispatched) == 1 and dispatched[0].amb_id == 0

    def test_empty_fleet(self):
        ctx = make_ctx([view(0)])
        ctx.views = {}
        with pytest.raises(EmptyFleet):
            policy_on_call(PolicyId(PolicyName.CA), ctx, call_at(STATION_B))


class TestBestMyopic:
    def test_busy_unit_chosen_when_freeing_nearby(self):
        # busy ambulance frees adjacent to the call soon; available one is far
        call_loc = GeoPoint(0.0, 0.1)
        busy = view(0, amb_type=ALS, t_f=60.0, loc_f=call_loc, t_b=FAR_FUTURE)
        available = view(1, amb_type=BLS, loc_b=GeoPoint(0.0, 0.0), t_b=0.0)
        call = call_at(call_loc, t_c=0.0, call_id=2)
        router = Router(None, 60.0)
        cost_busy = allocation_cost(ALS, LOW, 60.0, make_cost_model())
        cost_avail = allocation_cost(
            BLS, LOW, router.travel_time(GeoPoint(0.0, 0.0), call_loc, 0.0),
            make_cost_model())
        assert cost_busy < cost_avail
        ctx = make_ctx([busy, available])
        decisions = policy_on_call(PolicyId(PolicyName.BM), ctx, call)
        assert decisions[0].kind == DecisionKind.DISPATCH_AFTER_SERVICE
        assert decisions[0].amb_id == 0

    def test_tie_broken_by_least_advanced(self):
        same_spot = GeoPoint(0.0, 0.05)
        adv = view(0, amb_type=ALS, loc_b=same_spot)
        basic = view(1, amb_type=BLS, loc_b=same_spot)
        ctx = make_ctx([adv, basic])
        decisions = policy_on_call(PolicyId(PolicyName.BM), ctx,
                                   call_at(GeoPoint(0.0, 0.0), call_id=3))
        assert decisions[0].amb_id == 1

    def test_enumerated_minimum(self, rng):
        audit = {}
        views = [view(i, amb_type=AMB_TYPES[i % 3],
                      loc_b=GeoPoint(float(rng.uniform(-0.05, 0.05)),
                                     float(rng.uniform(-0.05, 0.05))))
                 for i in range(4)]
        ctx = make_ctx(views, audit=audit)
        call = call_at(GeoPoint(0.01, 0.02), call_id=9, call_type=HIGH)
        decisions = policy_on_call(PolicyId(PolicyName.BM), ctx, call)
        chosen = decisions[0].amb_id
        costs = audit["decisions"][-1]["costs"]
        assert costs[chosen] == min(costs.values())


class TestScaleInvariance:
    def test_rescaled_costs_choose_same_ambulance(self, rng):
        for _ in range(20):
            views = [view(i, amb_type=AMB_TYPES[i % 3],
                          loc_b=GeoPoint(float(rng.uniform(-0.05, 0.05)),
                                         float(rng.uniform(-0.05, 0.05))))
                     for i in range(4)]
            call = call_at(GeoPoint(0.01, 0.0), call_id=1,
                           call_type=CALL_TYPES[int(rng.integers(0, 3))])
            base = make_cost_model(mismatch=100.0)
            choices = []
            for model in (base, base.scaled(3.7)):
                vs = [view(v.id, v.amb_type, v.t_f, v.loc_f, v.t_b, v.loc_b)
                      for v in views]
                ctx = make_ctx(vs, cost_model=model)
                d = policy_on_call(PolicyId(PolicyName.BM), ctx, call)
                choices.append(d[0].amb_id)
            assert choices[0] == choices[1]


class TestGhp1:
    def test_queue_order_by_penalized_waiting(self):
        # older low-priority call loses to a newer high-priority call once the
        # urgency weights differ enough
        audit = {}
        high_call = call_at(GeoPoint(0.0, 0.01), t_c=90.0, call_type=HIGH, call_id=1)
        low_call = call_at(GeoPoint(0.0, 0.02), t_c=0.0, call_type=LOW, call_id=2)
        busy = view(0, t_f=1e6, t_b=FAR_FUTURE)
        ctx = make_ctx([busy], now=100.0, queue=[low_call], audit=audit)
        policy_on_call(PolicyId(PolicyName.GHP1), ctx, high_call)
        order = audit["ghp1_order"][-1]["order"]
        # penalized waits at t=100: high 4*10=40, low 1*100=100
        assert order == [2, 1]

    def test_free_ambulances_serve_in_order(self):
        audit = {}
        high_call = call_at(GeoPoint(0.0, 0.01), t_c=99.0, call_type=HIGH, call_id=1)
        low_call = call_at(GeoPoint(0.0, 0.02), t_c=0.0, call_type=LOW, call_id=2)
        free = view(0)
        ctx = make_ctx([free], now=100.0, queue=[low_call], audit=audit)
        decisions = policy_on_call(PolicyId(PolicyName.GHP1), ctx, high_call)
        served = [d.call_id for d in decisions if d.kind == DecisionKind.DISPATCH_NOW]
        queued = [d.call_id for d in decisions if d.kind == DecisionKind.QUEUE]
        assert served == [2] and queued == [1]  # low waited 100s -> penalty 100 > 4


class TestGhp2:
    def test_serves_max_min_alloc_first(self):
        c1 = call_at(GeoPoint(0.0, 0.05), t_c=0.0, call_type=LOW, call_id=1)
        c2 = call_at(GeoPoint(0.0, 0.01), t_c=0.0, call_type=HIGH, call_id=2)
        v0 = view(0)
        v1 = view(1, loc_b=STATION_B, t_b=0.0)
        ctx = make_ctx([v0, v1])
        decisions = policy_on_call(PolicyId(PolicyName.GHP2), ctx, c2)
        # only c2 pending here: dispatched immediately
        assert decisions[0].kind == DecisionKind.DISPATCH_NOW

    def test_defers_when_best_ambulances_busy(self):
        busy = view(0, t_f=5000.0, t_b=FAR_FUTURE)
        c = call_at(GeoPoint(0.0, 0.01), t_c=0.0, call_id=4)
        ctx = make_ctx([busy])
        decisions = policy_on_call(PolicyId(PolicyName.GHP2), ctx, c)
        assert decisions == [d for d in decisions if d.kind == DecisionKind.QUEUE]


class TestNonMyopic:
    def test_reserves_busy_unit_with_no_competition(self):
        busy = view(0, t_f=600.0, loc_f=GeoPoint(0.0, 0.01), t_b=FAR_FUTURE)
        call = call_at(GeoPoint(0.0, 0.012), t_c=0.0, call_id=1)
        ctx = make_ctx([busy])
        decisions = policy_on_call(PolicyId(PolicyName.NM), ctx, call)
        assert decisions[0].kind == DecisionKind.DISPATCH_AFTER_SERVICE
        assert decisions[0].amb_id == 0

    def test_yields_busy_unit_to_cheaper_future_call(self):
        # the future call is on top of the busy unit's completion point, so
        # serving it is strictly cheaper than serving the current call
        completion = GeoPoint(0.0, 0.05)
        busy = view(0, t_f=600.0, loc_f=completion, t_b=FAR_FUTURE)
        current = call_at(GeoPoint(0.0, 0.09), t_c=0.0, call_id=1)
        future = call_at(completion, t_c=500.0, call_id=2)
        ctx = make_ctx([busy], future=[future])
        decisions = policy_on_call(PolicyId(PolicyName.NM), ctx, current)
        kinds = {d.call_id: d.kind for d in decisions}
        assert kinds[2] == DecisionKind.DISPATCH_AFTER_SERVICE
        assert kinds[1] == DecisionKind.QUEUE


class TestOnFree:
    def test_oldest_queued_first(self):
        older = call_at(GeoPoint(0.0, 0.01), t_c=10.0, call_id=1)
        newer = call_at(GeoPoint(0.0, 0.02), t_c=20.0, call_id=2)
        freed = view(0, t_f=100.0, t_b=FAR_FUTURE)
        ctx = make_ctx([freed], now=100.0, queue=[newer, older])
        decisions = policy_on_free(PolicyId(PolicyName.CA), ctx, 0)
        assert decisions[0].kind == DecisionKind.DISPATCH_NOW
        assert decisions[0].call_id == 1

    def test_empty_queue_goes_to_closest_station(self):
        freed = view(0, t_f=100.0, loc_f=GeoPoint(0.0, 0.19), t_b=FAR_FUTURE)
        ctx = make_ctx([freed], now=100.0)
        decisions = policy_on_free(PolicyId(PolicyName.BM), ctx, 0)
        assert decisions[0].kind == DecisionKind.TO_STATION
        assert decisions[0].station == STATION_B

    def test_home_base_flag_wins_over_distance(self):
        freed = view(0, t_f=100.0, loc_f=GeoPoint(0.0, 0.19), t_b=FAR_FUTURE,
                     home=STATION_A)
        ctx = make_ctx([freed], now=100.0, use_home_base=True)
        decisions = policy_on_free(PolicyId(PolicyName.CA), ctx, 0)
        assert decisions[0].station == STATION_A

    def test_ghp_policies_send_unused_ambulance_to_station(self):
        freed = view(0, t_f=100.0, t_b=FAR_FUTURE)
        for name in (PolicyName.GHP1, PolicyName.GHP2, PolicyName.NM):
            ctx = make_ctx([view(0, t_f=100.0, t_b=FAR_FUTURE)], now=100.0)
            decisions = policy_on_free(PolicyId(name), ctx, 0)
            assert decisions[-1].kind == DecisionKind.TO_STATION
