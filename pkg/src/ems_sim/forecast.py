"""Space/time discretization, Poisson intensity estimation, and random
generation of emergency-call sample paths.

Counting model: for call type c, zone i and weekly time window t, arrivals
per realized window are Poisson with mean lambda[c,i,t] * D_t, where D_t is
the window duration in hours and N[c,i,t] counts how many times window t
occurred in the observed date span.
"""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ems_sim import geo
from ems_sim.domain import CallType, Priority, ServiceClass
from ems_sim.errors import Infeasible, InvalidRegion, MaxIterations
from ems_sim.sim import RawCall

MINUTES_PER_DAY = 24 * 60


# -- space partition ----------------------------------------------------------

@dataclass(frozen=True)
class BBox:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise InvalidRegion(f"degenerate bounding box {self}")


@dataclass
class SpacePartition:
    """Either an nx-by-ny rectangular grid over a bbox (row-major ids, rows
    along latitude from the south edge) or a list of custom polygons."""

    kind: str                         # "rect" or "custom"
    bbox: Optional[BBox] = None
    nx: int = 0
    ny: int = 0
    polygons: list[list[tuple[float, float]]] = field(default_factory=list)

    @property
    def n_zones(self) -> int:
        return self.nx * self.ny if self.kind == "rect" else len(self.polygons)

    def zone_bbox(self, zone: int) -> BBox:
        if self.kind == "rect":
            iy, ix = divmod(zone, self.nx)
            dlat = (self.bbox.lat_max - self.bbox.lat_min) / self.ny
            dlon = (self.bbox.lon_max - self.bbox.lon_min) / self.nx
            return BBox(self.bbox.lat_min + iy * dlat, self.bbox.lat_min + (iy + 1) * dlat,
                        self.bbox.lon_min + ix * dlon, self.bbox.lon_min + (ix + 1) * dlon)
        ring = self.polygons[zone]
        lats = [p[0] for p in ring]
        lons = [p[1] for p in ring]
        return BBox(min(lats), max(lats), min(lons), max(lons))

    def zone_center(self, zone: int) -> geo.GeoPoint:
        bb = self.zone_bbox(zone)
        return geo.GeoPoint((bb.lat_min + bb.lat_max) / 2, (bb.lon_min + bb.lon_max) / 2)

    def sample_point(self, zone: int, rng: np.random.Generator) -> geo.GeoPoint:
        bb = self.zone_bbox(zone)
        if self.kind == "rect":
            return geo.GeoPoint(rng.uniform(bb.lat_min, bb.lat_max),
                                rng.uniform(bb.lon_min, bb.lon_max))
        ring = self.polygons[zone]
        for _ in range(10_000):
            p = geo.GeoPoint(rng.uniform(bb.lat_min, bb.lat_max),
                             rng.uniform(bb.lon_min, bb.lon_max))
            if _point_in_ring(p.lat, p.lon, ring):
                return p
        raise InvalidRegion(f"rejection sampling failed for zone {zone}")


def build_rect_partition(bbox: BBox, nx: int, ny: int) -> SpacePartition:
    if nx < 1 or ny < 1:
        raise InvalidRegion(f"grid must be at least 1x1, got {nx}x{ny}")
    return SpacePartition(kind="rect", bbox=bbox, nx=nx, ny=ny)


def load_custom_partition(path) -> SpacePartition:
    """One polygon per line: ``<zone_id>; <lat,lon> <lat,lon> ...``."""
    rings: dict[int, list[tuple[float, float]]] = {}
    for raw in open(path).read().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, body = line.partition(";")
        ring = []
        for token in body.split():
            lat_s, lon_s = token.split(",")
            ring.append((float(lat_s), float(lon_s)))
        if len(ring) < 3:
            raise InvalidRegion(f"zone {head}: polygon needs at least 3 vertices")
        rings[int(head)] = ring
    if sorted(rings) != list(range(len(rings))):
        raise InvalidRegion("zone ids must be dense 0..n-1")
    return SpacePartition(kind="custom", polygons=[rings[i] for i in range(len(rings))])


def _point_in_ring(lat: float, lon: float, ring: Sequence[tuple[float, float]]) -> bool:
    # even-odd ray casting in (lat, lon) coordinates
    inside = False
    n = len(ring)
    for k in range(n):
        a_lat, a_lon = ring[k]
        b_lat, b_lon = ring[(k + 1) % n]
        if (a_lat > lat) != (b_lat > lat):
            x = a_lon + (lat - a_lat) / (b_lat - a_lat) * (b_lon - a_lon)
            if lon < x:
                inside = not inside
    return inside


def locate(p: SpacePartition, g: geo.GeoPoint) -> Optional[int]:
    """Zone containing g (closed min edges, open max edges), or None."""
    if p.kind == "rect":
        bb = p.bbox
        if not (bb.lat_min <= g.lat < bb.lat_max and bb.lon_min <= g.lon < bb.lon_max):
            return None
        iy = int((g.lat - bb.lat_min) / (bb.lat_max - bb.lat_min) * p.ny)
        ix = int((g.lon - bb.lon_min) / (bb.lon_max - bb.lon_min) * p.nx)
        iy = min(iy, p.ny - 1)
        ix = min(ix, p.nx - 1)
        return iy * p.nx + ix
    for zone, ring in enumerate(p.polygons):
        if _point_in_ring(g.lat, g.lon, ring):
            return zone
    return None


# -- time partition -----------------------------------------------------------

@dataclass(frozen=True)
class TimeWindow:
    id: int
    days: frozenset[int]      # weekday numbers, Monday = 0
    start_min: int
    end_min: int

    @property
    def duration_hours(self) -> float:
        return (self.end_min - self.start_min) / 60.0


@dataclass
class TimePartition:
    windows: list[TimeWindow]

    def __post_init__(self):
        seen: set[tuple[int, int]] = set()
        for w in self.windows:
            if w.end_min <= w.start_min:
                raise InvalidRegion(f"window {w.id} has nonpositive duration")
            for d in w.days:
                for minute in range(w.start_min, w.end_min):
                    key = (d, minute)
                    if key in seen:
                        raise InvalidRegion(f"window {w.id} overlaps at day {d} minute {minute}")
                    seen.add(key)

    @property
    def n_windows(self) -> int:
        return len(self.windows)

    def window_of(self, dow: int, minute: int) -> Optional[int]:
        for w in self.windows:
            if dow in w.days and w.start_min <= minute < w.end_min:
                return w.id
        return None

    @staticmethod
    def weekly(minutes: int = 30) -> "TimePartition":
        """One window per (weekday, intraday slot); ids are dow-major."""
        slots = MINUTES_PER_DAY // minutes
        windows = []
        for dow in range(7):
            for s in range(slots):
                windows.append(TimeWindow(dow * slots + s, frozenset({dow}),
                                          s * minutes, (s + 1) * minutes))
        return TimePartition(windows)

    def occurrences(self, start: _dt.date, end: _dt.date) -> np.ndarray:
        """How many times each window occurs in the half-open date span."""
        day_counts = [0] * 7
        d = start
        while d < end:
            day_counts[d.weekday()] += 1
            d += _dt.timedelta(days=1)
        return np.array([sum(day_counts[dow] for dow in w.days) for w in self.windows],
                        dtype=np.int64)


# -- observation cube and models ------------------------------------------------

@dataclass(frozen=True)
class HistoricalCall:
    when: _dt.datetime
    loc: geo.GeoPoint
    type_id: int


@dataclass
class ObservationCube:
    N: np.ndarray            # (C, I, T) realized window counts
    M: np.ndarray            # (C, I, T) total arrivals
    rejected: int = 0

    def __post_init__(self):
        if self.N.shape != self.M.shape:
            raise ValueError("N and M shapes differ")
        if (self.M[self.N == 0] != 0).any():
            raise ValueError("arrivals recorded in cells with zero observations")


@dataclass
class IntensityModel:
    """Per-hour arrival rates, either tabulated per (c, i, t) or induced by
    covariates through per-window means beta . x."""

    durations_h: np.ndarray                       # (T,)
    lambda_: Optional[np.ndarray] = None          # (C, I, T) rates per hour
    beta: Optional[np.ndarray] = None             # (K,)
    covariates: Optional[np.ndarray] = None       # (C, I, T, K)
    unobserved: Optional[np.ndarray] = None       # mask of cells with N == 0

    def window_means(self) -> np.ndarray:
        """Expected arrivals per realized window, shape (C, I, T)."""
        if self.lambda_ is not None:
            return self.lambda_ * self.durations_h[None, None, :]
        return self.covariates @ self.beta

    def rates(self) -> np.ndarray:
        return self.window_means() / self.durations_h[None, None, :]


def aggregate(calls: Sequence[HistoricalCall], sp: SpacePartition, tp: TimePartition,
              n_types: int, start: _dt.date, end: _dt.date) -> ObservationCube:
    """Count arrivals per (type, zone, window) over the date span; calls that
    fall outside the partition, span or type range land in the reject tally."""
    occ = tp.occurrences(start, end)
    shape = (n_types, sp.n_zones, tp.n_windows)
    N = np.broadcast_to(occ, shape).copy()
    M = np.zeros(shape, dtype=np.int64)
    rejected = 0
    for call in calls:
        if not (start <= call.when.date() < end) or not (0 <= call.type_id < n_types):
            rejected += 1
            continue
        zone = locate(sp, call.loc)
        window = tp.window_of(call.when.weekday(), call.when.hour * 60 + call.when.minute)
        if zone is None or window is None:
            rejected += 1
            continue
        M[call.type_id, zone, window] += 1
    return ObservationCube(N=N, M=M, rejected=rejected)


def fit_no_covariates(obs: ObservationCube, tp: TimePartition,
                      smoothing_weight: float = 0.0,
                      neighbor_zones: Optional[Sequence[tuple[int, int]]] = None
                      ) -> IntensityModel:
    """Closed-form Poisson MLE lambda = M / (N * D_t); cells never observed
    get rate 0 and are flagged. A positive smoothing weight adds quadratic
    coupling between neighboring zones and refines iteratively."""
    durations = np.array([w.duration_hours for w in tp.windows])
    denom = obs.N * durations[None, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(denom > 0, obs.M / np.where(denom > 0, denom, 1.0), 0.0)
    model = IntensityModel(durations_h=durations, lambda_=lam, unobserved=obs.N == 0)
    if smoothing_weight > 0 and neighbor_zones:
        model.lambda_ = _smooth_lambda(obs, durations, lam, smoothing_weight, neighbor_zones)
    return model


def _smooth_lambda(obs, durations, lam0, weight, pairs, iters=5000, tol=1e-10):
    lam = lam0.copy()
    nd = obs.N * durations[None, None, :]

    def objective(x):
        safe = np.where(x > 0, x, 1.0)
        nll = float(np.sum(nd * x) - np.sum(obs.M * np.where(obs.M > 0, np.log(safe), 0.0)))
        pen = sum(float(((x[:, i, :] - x[:, j, :]) ** 2).sum()) for i, j in pairs)
        return nll + 0.5 * weight * pen

    def grad(x):
        safe = np.where(x > 0, x, 1.0)
        g = nd - np.where(obs.M > 0, obs.M / safe, 0.0)
        for i, j in pairs:
            diff = weight * (x[:, i, :] - x[:, j, :])
            g[:, i, :] += diff
            g[:, j, :] -= diff
        return g

    step = 1e-3
    prev = objective(lam)
    for _ in range(iters):
        g = grad(lam)
        while step > 1e-16:
            trial = np.maximum(lam - step * g, 0.0)
            val = objective(trial)
            if val <= prev:
                break
            step *= 0.5
        lam, cur = trial, val
        if prev - cur < tol * max(1.0, abs(prev)):
            break
        prev = cur
        step *= 1.5
    return lam


_EPS_RATE = 1e-6


def fit_covariates(obs: ObservationCube, covariates: np.ndarray,
                   lower: Optional[np.ndarray] = None,
                   upper: Optional[np.ndarray] = None,
                   start: Optional[np.ndarray] = None,
                   max_iter: int = 10_000, tol: float = 1e-8) -> IntensityModel:
    """Constrained Poisson MLE for per-window means beta . x[c,i,t].

    Minimizes sum over observed cells of N * (beta.x) - M * log(beta.x)
    subject to beta.x >= 1e-6 on every observed cell, plus optional
    coefficient box bounds, by projected gradient with backtracking.
    """
    K = covariates.shape[-1]
    mask = obs.N > 0
    X = covariates[mask].astype(np.float64)          # (cells, K)
    Nv = obs.N[mask].astype(np.float64)
    Mv = obs.M[mask].astype(np.float64)
    if (np.abs(X).sum(axis=1) == 0).any():
        raise Infeasible("an observed cell has all-zero covariates")

    lo = np.full(K, -np.inf) if lower is None else np.asarray(lower, dtype=np.float64)
    hi = np.full(K, np.inf) if upper is None else np.asarray(upper, dtype=np.float64)

    def box(b):
        return np.clip(b, lo, hi)

    def feasible(b):
        return bool((X @ b >= _EPS_RATE).all())

    beta = _find_start(X, Nv, Mv, box, feasible) if start is None else box(np.asarray(start, dtype=np.float64))
    if not feasible(beta):
        raise Infeasible("no feasible starting point found")

    def objective(b):
        mu = X @ b
        return float(np.sum(Nv * mu) - np.sum(Mv * np.log(mu)))

    def gradient(b):
        mu = X @ b
        return X.T @ (Nv - Mv / mu)

    durations = np.ones(obs.N.shape[-1])
    f = objective(beta)
    step = 1.0
    for _ in range(max_iter):
        g = gradient(beta)
        moved = False
        while step > 1e-18:
            trial = box(beta - step * g)
            if feasible(trial):
                f_trial = objective(trial)
                if f_trial <= f:
                    moved = True
                    break
            step *= 0.5
        if not moved:
            return IntensityModel(durations_h=durations, beta=beta, covariates=covariates)
        rel_drop = (f - f_trial) / max(1.0, abs(f))
        beta, f = trial, f_trial
        step *= 2.0
        if rel_drop < tol:
            return IntensityModel(durations_h=durations, beta=beta, covariates=covariates)
    raise MaxIterations(f"no convergence in {max_iter} iterations",
                        last_iterate=beta, objective=f)


def _find_start(X, Nv, Mv, box, feasible):
    # least squares on per-window empirical means, then uniform fallbacks
    target = Mv / Nv
    try:
        ls, *_ = np.linalg.lstsq(X, np.maximum(target, _EPS_RATE), rcond=None)
        cand = box(ls)
        if feasible(cand):
            return cand
    except np.linalg.LinAlgError:
        pass
    for scale in (1.0, 0.1, 10.0, 1e-2, 1e2, 1e-3, 1e3):
        cand = box(np.full(X.shape[1], scale))
        if feasible(cand):
            return cand
    raise Infeasible("no feasible starting point found")


# -- sample-path generation ------------------------------------------------------

def generate_sample_paths(model: IntensityModel, sp: SpacePartition, tp: TimePartition,
                          start: _dt.date, end: _dt.date, n_paths: int, seed: int,
                          call_types: Sequence[CallType],
                          class_probs: Optional[dict[ServiceClass, float]] = None
                          ) -> list[list[RawCall]]:
    """Draw Poisson counts per (type, zone, window occurrence), with call
    times uniform in the window and locations uniform in the zone.
    Deterministic for a fixed seed; paths use independent derived streams."""
    means = model.window_means()
    means = np.where(means > 0, means, 0.0)
    C, I, T = means.shape
    classes = list(ServiceClass)
    probs = None
    if class_probs is not None:
        probs = np.array([class_probs.get(c, 0.0) for c in classes])
    day_windows: dict[int, list[TimeWindow]] = {}
    for w in tp.windows:
        for d in w.days:
            day_windows.setdefault(d, []).append(w)

    paths = []
    for p in range(n_paths):
        rng = np.random.default_rng([seed, p])
        calls: list[tuple[float, float, float, int]] = []
        d = start
        while d < end:
            base_s = (d - start).days * 86400.0
            for w in day_windows.get(d.weekday(), []):
                for c in range(C):
                    for i in range(I):
                        mean = means[c, i, w.id]
                        if mean <= 0:
                            continue
                        count = rng.poisson(mean)
                        for _ in range(count):
                            t = base_s + 60.0 * rng.uniform(w.start_min, w.end_min)
                            pt = sp.sample_point(i, rng)
                            calls.append((t, pt.lat, pt.lon, c))
            d += _dt.timedelta(days=1)
        calls.sort(key=lambda rec: rec[0])
        raw_calls = []
        for idx, (t, lat, lon, c) in enumerate(calls):
            sc = None
            if probs is not None:
                sc = classes[int(rng.choice(len(classes), p=probs))]
            ct = call_types[c]
            raw_calls.append(RawCall(id=idx, t=t, loc=geo.GeoPoint(lat, lon),
                                     call_type_id=ct.id, priority=ct.priority,
                                     service_class=sc))
        paths.append(raw_calls)
    return paths


def count_per_period(paths: Sequence[Sequence[RawCall]], tp: TimePartition,
                     start: _dt.date, end: _dt.date,
                     priorities: Optional[set[Priority]] = None,
                     grouping: str = "occurrence") -> tuple[list, np.ndarray]:
    """Counts per path and period.

    grouping "occurrence": one period per calendar occurrence of a window
    (chronological); "window": periods are window ids folded over the span.
    Returns (period keys, array of shape (n_paths, n_periods)).
    """
    periods: list = []
    index: dict = {}
    d = start
    while d < end:
        for w in sorted(tp.windows, key=lambda w: w.start_min):
            if d.weekday() in w.days:
                key = ((d - start).days, w.id) if grouping == "occurrence" else w.id
                if key not in index:
                    index[key] = len(periods)
                    periods.append(key)
        d += _dt.timedelta(days=1)
    counts = np.zeros((len(paths), len(periods)), dtype=np.int64)
    for p, path in enumerate(paths):
        for call in path:
            if priorities is not None and call.priority not in priorities:
                continue
            day = int(call.t // 86400)
            minute = int((call.t - day * 86400) // 60)
            dow = (start + _dt.timedelta(days=day)).weekday()
            w = tp.window_of(dow, minute)
            if w is None:
                continue
            key = (day, w) if grouping == "occurrence" else w
            if key in index:
                counts[p, index[key]] += 1
    return periods, counts


def _nearest_rank(sorted_col: np.ndarray, q: float) -> float:
    n = len(sorted_col)
    rank = max(1, math.ceil(q * n))
    return float(sorted_col[rank - 1])


def path_summary(paths: Sequence[Sequence[RawCall]], tp: TimePartition,
                 start: _dt.date, end: _dt.date, grouping: str = "occurrence",
                 q_low: float = 0.05, q_high: float = 0.95,
                 priorities: Optional[set[Priority]] = None) -> dict:
    """Per-period mean and lower nearest-rank quantiles across paths."""
    if not paths:
        raise ValueError("need at least one path")
    periods, counts = count_per_period(paths, tp, start, end, priorities, grouping)
    srt = np.sort(counts, axis=0)
    return {
        "periods": periods,
        "mean": counts.mean(axis=0),
        "q_low": np.array([_nearest_rank(srt[:, j], q_low) for j in range(srt.shape[1])]),
        "q_high": np.array([_nearest_rank(srt[:, j], q_high) for j in range(srt.shape[1])]),
    }
