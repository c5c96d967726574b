"""Response-time and penalized-response distributions with day/time filters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ems_sim.domain import Priority
from ems_sim.errors import EmptySelection
from ems_sim.sim import SimOutput

ALL_DAYS = frozenset(range(7))
ALL_PRIORITIES = frozenset(Priority)


@dataclass(frozen=True)
class ResponseSample:
    """One served call flattened for filtering."""

    call_id: int
    raw: float                 # waiting on scene, seconds
    penalized: float
    priority: Priority
    day_of_week: int
    minute_of_day: int
    policy: str
    scenario: int


@dataclass(frozen=True)
class MetricFilter:
    days: frozenset[int] = ALL_DAYS
    window: tuple[int, int] = (0, 24 * 60)     # [start minute, end minute)
    kind: str = "raw"                          # "raw" or "penalized"
    priorities: frozenset[Priority] = ALL_PRIORITIES

    def __post_init__(self):
        if not self.days or not self.priorities:
            raise ValueError("empty filter selection")
        if self.kind not in ("raw", "penalized"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if not (0 <= self.window[0] < self.window[1] <= 24 * 60):
            raise ValueError(f"bad intraday window {self.window}")


@dataclass(frozen=True)
class DistSummary:
    min: float
    max: float
    mean: float
    q90: float
    n: int


def samples_from_output(output: SimOutput, start_weekday: int = 0) -> list[ResponseSample]:
    """Flatten served calls of a run; failed calls (sentinel -1) are skipped."""
    samples = []
    for call in output.calls:
        rec = output.records.get(call.id)
        if rec is None or rec.serving_ambulance < 0:
            continue
        day = int(call.t_c // 86400)
        minute = int((call.t_c - day * 86400) // 60)
        samples.append(ResponseSample(
            call_id=call.id, raw=rec.waiting_on_scene,
            penalized=rec.waiting_on_scene_penalized,
            priority=call.call_type.priority,
            day_of_week=(start_weekday + day) % 7, minute_of_day=minute,
            policy=output.policy_label, scenario=output.scenario_id,
        ))
    return samples


def apply_filter(records: Sequence[ResponseSample], f: MetricFilter) -> np.ndarray:
    values = [
        (r.penalized if f.kind == "penalized" else r.raw)
        for r in records
        if r.day_of_week in f.days
        and f.window[0] <= r.minute_of_day < f.window[1]
        and r.priority in f.priorities
    ]
    if not values:
        raise EmptySelection("no records match the filter")
    return np.asarray(values, dtype=np.float64)


def nearest_rank_quantile(values: np.ndarray, q: float) -> float:
    srt = np.sort(values)
    rank = max(1, math.ceil(q * len(srt)))
    return float(srt[rank - 1])


def summarize(records: Sequence[ResponseSample], f: MetricFilter) -> DistSummary:
    values = apply_filter(records, f)
    return DistSummary(
        min=float(values.min()), max=float(values.max()), mean=float(values.mean()),
        q90=nearest_rank_quantile(values, 0.9), n=len(values),
    )


def ecdf(records: Sequence[ResponseSample], f: MetricFilter) -> list[tuple[float, float]]:
    """Right-continuous empirical CDF as (value, cumulative fraction) steps."""
    values = apply_filter(records, f)
    xs, counts = np.unique(values, return_counts=True)
    fracs = np.cumsum(counts) / len(values)
    return list(zip(xs.tolist(), fracs.tolist()))


def histogram(records: Sequence[ResponseSample], f: MetricFilter, bins: int
              ) -> tuple[np.ndarray, np.ndarray]:
    if bins < 1:
        raise ValueError("bins must be at least 1")
    values = apply_filter(records, f)
    counts, edges = np.histogram(values, bins=bins)
    return edges, counts


def export_table(samples_by_policy: dict[str, Sequence[ResponseSample]], f: MetricFilter
                 ) -> str:
    """Delimited summary table, one row per policy."""
    lines = ["policy,metric,min,mean,q90,max,n"]
    for policy in sorted(samples_by_policy):
        s = summarize(samples_by_policy[policy], f)
        lines.append(f"{policy},{f.kind},{s.min!r},{s.mean!r},{s.q90!r},{s.max!r},{s.n}")
    return "\n".join(lines) + "\n"
