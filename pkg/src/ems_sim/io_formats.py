"""File formats, the run configuration, and run-folder persistence.

Reference formats (all space-delimited text, ``#`` comments where noted):

* ``calls.txt`` -- one call per line, scenario-major, time-sorted:
  ``scenario_id call_id epoch_seconds lat lon type_id priority service_class``
* trajectory files ``<out>/<H>/output_scenarios_<id>_<H>`` -- one line per
  event time: ``t n_active (call_id lat lon priority)... n_amb
  (amb_id ride_type lat lon dest_idx)...``. The leading timestamp is an
  extension of the reference layout, documented here.
* response-time files ``<out>/<H>/response_times_<H>`` -- per call:
  ``call_id t_c response_time allocation_cost amb_index`` (amb_index -1 when
  unserved).
* EMS data templates: ``<id> <lat> <lon>`` for stations/hospitals/cleaning
  stations; ``<id> <type_label> <station_id> [home_station_id]`` for
  ambulances.

Floats are written with ``repr`` so write/read round-trips are bit exact.
Configuration files are ``key = value`` lines; the same keys may be passed
as CLI overrides, which win over the file; the environment variable
``EMS_SIM_OUTPUT`` supplies ``output_folder`` at the lowest precedence.
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ems_sim import geo
from ems_sim.dispatch import CostModel, PolicyId
from ems_sim.domain import (
    AmbulanceState,
    AmbulanceType,
    CallRecord,
    CallType,
    EmergencyCall,
    Priority,
    ServiceClass,
    TripType,
)
from ems_sim.errors import ConfigError, ParseError
from ems_sim.sim import (
    AmbulanceSpec,
    CallTimeline,
    DurationDist,
    RawCall,
    SimConfig,
    SimOutput,
    position_on_arrays,
)
from ems_sim.streets import Router, load_graph

MAX_HOSPITALS = 9
MAX_BASES = 29

DEFAULT_AMB_TYPES = (
    AmbulanceType(0, "BLS", 0),
    AmbulanceType(1, "ILS", 1),
    AmbulanceType(2, "ALS", 2),
)

DEFAULT_CALL_TYPES = (
    CallType(0, "low", Priority.LOW),
    CallType(1, "intermediate", Priority.INTERMEDIATE),
    CallType(2, "high", Priority.HIGH),
)


@dataclass
class RunConfig:
    output_folder: str = ""
    h_use_fixed_bases: bool = False
    n_scenarios: int = 2
    n_hospitals: int = 2
    n_bases: int = 3
    n_cleaning: int = 1
    n_ambulances: int = 4
    policies: str = "CA,BM,NM,GHP1,GHP2"
    seed: int = 0
    speed: float = 60.0
    horizon_days: float = 7.0
    start_date: str = "2024-01-01"
    bbox: str = "-23.1,-22.7,-43.8,-43.1"
    rate_per_hour: float = 2.0
    theta_low: float = 1.0
    theta_mid: float = 2.0
    theta_high: float = 4.0
    mismatch_penalty: float = 1e4
    on_scene_median_s: float = 600.0
    on_scene_sigma: float = 0.25
    at_hospital_median_s: float = 900.0
    at_hospital_sigma: float = 0.25
    cleaning_median_s: float = 1200.0
    cleaning_sigma: float = 0.25
    class_probs: str = "0.25,0.25,0.25,0.25"
    nm_window_s: float = 3600.0
    t_step: float = 5.0
    bases_file: str = ""
    hospitals_file: str = ""
    cleaning_file: str = ""
    ambulances_file: str = ""
    graph_file: str = ""
    calls_file: str = ""
    audit: bool = False

    def policy_ids(self) -> list[PolicyId]:
        out = []
        for token in self.policies.split(","):
            token = token.strip()
            if token:
                pid = PolicyId.parse(token)
                if pid.label == "NM":
                    pid = PolicyId(pid.name, self.nm_window_s)
                out.append(pid)
        return out

    def bbox_tuple(self) -> tuple[float, float, float, float]:
        parts = [float(x) for x in self.bbox.split(",")]
        if len(parts) != 4:
            raise ConfigError(f"bbox needs 4 numbers, got {self.bbox!r}", key="bbox")
        return tuple(parts)

    def start(self) -> _dt.date:
        return _dt.date.fromisoformat(self.start_date)


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, text: str, target_type: type):
    text = text.strip()
    if target_type is bool:
        low = text.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"{name}: expected a boolean, got {text!r}", key=name)
    try:
        if target_type is int:
            return int(text)
        if target_type is float:
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}", key=name) from exc
    return text


def parse_config(path: Optional[str], cli_overrides: Optional[dict] = None
                 ) -> tuple[RunConfig, list[str]]:
    """Merge defaults < environment < config file < CLI overrides."""
    fields = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    types = {name: type(getattr(RunConfig(), name)) for name in fields}
    values: dict = {}
    warnings: list[str] = []

    env_out = os.environ.get("EMS_SIM_OUTPUT", "")
    if env_out:
        values["output_folder"] = env_out

    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        for line_no, raw in enumerate(p.read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {line_no}: expected key = value, got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in types:
                warnings.append(f"unknown config key {key!r} (line {line_no})")
                continue
            values[key] = _coerce(key, val, types[key])

    for key, val in (cli_overrides or {}).items():
        if key not in types:
            warnings.append(f"unknown override {key!r}")
            continue
        values[key] = val if not isinstance(val, str) else _coerce(key, val, types[key])

    cfg = RunConfig(**values)
    if not cfg.output_folder:
        raise ConfigError("missing required key output_folder", key="output_folder")
    if cfg.n_hospitals > MAX_HOSPITALS:
        raise ConfigError(f"n_hospitals={cfg.n_hospitals} exceeds the maximum of {MAX_HOSPITALS}",
                          key="n_hospitals")
    if cfg.n_bases > MAX_BASES:
        raise ConfigError(f"n_bases={cfg.n_bases} exceeds the maximum of {MAX_BASES}",
                          key="n_bases")
    if min(cfg.n_hospitals, cfg.n_bases, cfg.n_ambulances, cfg.n_scenarios) < 1:
        raise ConfigError("facility, ambulance and scenario counts must be at least 1")
    return cfg, warnings


# -- EMS data templates ---------------------------------------------------------

def write_points(points: Sequence[geo.GeoPoint], path) -> None:
    with open(path, "w") as fh:
        for i, p in enumerate(points):
            fh.write(f"{i} {p.lat!r} {p.lon!r}\n")


def read_points(path) -> list[geo.GeoPoint]:
    points = []
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ParseError("expected <id> <lat> <lon>", line_no)
        points.append(geo.GeoPoint(float(parts[1]), float(parts[2])))
    return points


def write_ambulances(specs: Sequence[AmbulanceSpec], path) -> None:
    with open(path, "w") as fh:
        for s in specs:
            home = "" if s.home is None else f" {s.home}"
            fh.write(f"{s.id} {s.amb_type.label} {s.station}{home}\n")


def read_ambulances(path, amb_types: Sequence[AmbulanceType] = DEFAULT_AMB_TYPES
                    ) -> list[AmbulanceSpec]:
    by_label = {t.label: t for t in amb_types}
    specs = []
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ParseError("expected <id> <type_label> <station_id> [home_id]", line_no)
        if parts[1] not in by_label:
            raise ParseError(f"unknown ambulance type {parts[1]!r}", line_no)
        home = int(parts[3]) if len(parts) > 3 else None
        specs.append(AmbulanceSpec(int(parts[0]), by_label[parts[1]], int(parts[2]), home))
    return specs


# -- calls.txt --------------------------------------------------------------------

def write_calls(scenarios: Sequence[Sequence[RawCall]], path) -> None:
    with open(path, "w") as fh:
        for sid, calls in enumerate(scenarios):
            for c in sorted(calls, key=lambda c: (c.t, c.id)):
                sc = c.service_class.value if c.service_class is not None else "-"
                fh.write(f"{sid} {c.id} {c.t!r} {c.loc.lat!r} {c.loc.lon!r} "
                         f"{c.call_type_id} {int(c.priority)} {sc}\n")


def read_calls(path) -> list[list[RawCall]]:
    scenarios: dict[int, list[RawCall]] = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ParseError(f"expected 8 fields, got {len(parts)}", line_no)
        sid = int(parts[0])
        sc = None if parts[7] == "-" else ServiceClass(parts[7])
        scenarios.setdefault(sid, []).append(RawCall(
            id=int(parts[1]), t=float(parts[2]),
            loc=geo.GeoPoint(float(parts[3]), float(parts[4])),
            call_type_id=int(parts[5]), priority=Priority(int(parts[6])),
            service_class=sc,
        ))
    return [scenarios[k] for k in sorted(scenarios)]


# -- trajectory files --------------------------------------------------------------

def _facility_index(points: Sequence[geo.GeoPoint]) -> dict[tuple[float, float], int]:
    return {(p.lat, p.lon): i for i, p in enumerate(points)}


def _serving_intervals(out: SimOutput) -> dict[int, list[tuple[float, float, int]]]:
    intervals: dict[int, list[tuple[float, float, int]]] = {}
    for call_id, tl in out.timelines.items():
        rec = out.records.get(call_id)
        if rec is None or rec.serving_ambulance < 0 or math.isnan(tl.leg_start):
            continue
        intervals.setdefault(rec.serving_ambulance, []).append(
            (tl.leg_start, tl.service_end, call_id))
    for lst in intervals.values():
        lst.sort()
    return intervals


def _dest_index(trip_type: TripType, dest_key, call_id: int, stations, hospitals, cleaning
                ) -> int:
    if trip_type in (TripType.TO_SCENE, TripType.ON_SCENE):
        return call_id
    if trip_type in (TripType.TO_HOSPITAL, TripType.AT_HOSPITAL):
        return hospitals.get(dest_key, -1)
    if trip_type in (TripType.TO_CLEANING, TripType.CLEANING):
        return cleaning.get(dest_key, -1)
    return stations.get(dest_key, -1)


def trajectory_filename(scenario_id: int, policy_label: str) -> str:
    return f"output_scenarios_{scenario_id}_{policy_label}"


def write_trajectories(out: SimOutput, folder, cfg: SimConfig) -> Path:
    """One line per event time with all active calls and all ambulances."""
    policy_dir = Path(folder) / out.policy_label
    policy_dir.mkdir(parents=True, exist_ok=True)
    path = policy_dir / trajectory_filename(out.scenario_id, out.policy_label)
    stations = _facility_index(cfg.stations)
    hospitals = _facility_index(cfg.hospitals)
    cleaning = _facility_index(cfg.cleaning_stations or cfg.stations)
    serving = _serving_intervals(out)

    times = sorted({out.t_start, *(e.time for e in out.events
                                   if out.t_start <= e.time <= out.t_end)})
    with open(path, "w") as fh:
        for t in times:
            active = []
            for call in out.calls:
                tl = out.timelines.get(call.id)
                if tl is None:
                    continue
                end = tl.service_end if not math.isnan(tl.service_end) else out.t_end
                if call.t_c <= t < end:
                    active.append(call)
            fields = [repr(float(t)), str(len(active))]
            for call in active:
                fields += [str(call.id), repr(call.loc.lat), repr(call.loc.lon),
                           str(int(call.call_type.priority))]
            fields.append(str(len(out.ambulances)))
            for s in out.ambulances:
                pos, trip_type, dest = position_on_arrays(s.trips, s.times, s.types, t,
                                                          out.speed)
                if t >= s.times[-1] and s.t_b <= t:
                    trip_type = TripType.AT_STATION
                call_id = -1
                for lo, hi, cid in serving.get(s.id, []):
                    if lo <= t < hi:
                        call_id = cid
                        break
                if dest is not None:
                    dest_key = (dest.lat, dest.lon)
                else:
                    dest_key = (pos.lat, pos.lon)
                idx = _dest_index(trip_type, dest_key, call_id, stations, hospitals, cleaning)
                fields += [str(s.id), str(int(trip_type)), repr(pos.lat), repr(pos.lon),
                           str(idx)]
            fh.write(" ".join(fields) + "\n")
    return path


def read_trajectories(path) -> list[dict]:
    lines = []
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = raw.split()
        if not parts:
            continue
        cursor = 0

        def take(n):
            nonlocal cursor
            vals = parts[cursor:cursor + n]
            if len(vals) != n:
                raise ParseError("truncated trajectory line", line_no)
            cursor += n
            return vals

        t = float(take(1)[0])
        n_active = int(take(1)[0])
        calls = []
        for _ in range(n_active):
            cid, lat, lon, pri = take(4)
            calls.append({"id": int(cid), "lat": float(lat), "lon": float(lon),
                          "priority": int(pri)})
        n_amb = int(take(1)[0])
        ambs = []
        for _ in range(n_amb):
            aid, tt, lat, lon, dest = take(5)
            ambs.append({"id": int(aid), "trip_type": int(tt), "lat": float(lat),
                         "lon": float(lon), "dest": int(dest)})
        if cursor != len(parts):
            raise ParseError("trailing fields on trajectory line", line_no)
        lines.append({"t": t, "calls": calls, "ambulances": ambs})
    return lines


# -- response-time files --------------------------------------------------------------

def response_times_filename(policy_label: str) -> str:
    return f"response_times_{policy_label}"


def write_response_times(out: SimOutput, folder) -> Path:
    """Five fields per call: id, call instant, response time, allocation
    cost, serving ambulance (-1 when unserved). Appends across scenarios."""
    policy_dir = Path(folder) / out.policy_label
    policy_dir.mkdir(parents=True, exist_ok=True)
    path = policy_dir / response_times_filename(out.policy_label)
    mode = "a" if path.exists() else "w"
    with open(path, mode) as fh:
        for call in out.calls:
            rec = out.records.get(call.id)
            if rec is None:
                continue
            fh.write(f"{call.id} {call.t_c!r} {rec.waiting_on_scene!r} "
                     f"{rec.allocation_cost!r} {rec.serving_ambulance}\n")
    return path


def read_response_times(path) -> list[dict]:
    rows = []
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = raw.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", line_no)
        rows.append({"call_id": int(parts[0]), "t_c": float(parts[1]),
                     "response_time": float(parts[2]), "allocation_cost": float(parts[3]),
                     "amb": int(parts[4])})
    return rows


# -- run-folder persistence (full arrays for trace/serve) ------------------------------

def _point(p: Optional[geo.GeoPoint]):
    return None if p is None else [p.lat, p.lon]


def _unpoint(v) -> Optional[geo.GeoPoint]:
    return None if v is None else geo.GeoPoint(v[0], v[1])


def sidecar_filename(scenario_id: int, policy_label: str) -> str:
    return f"run_{scenario_id}_{policy_label}.json"


def write_sidecar(out: SimOutput, folder) -> Path:
    policy_dir = Path(folder) / out.policy_label
    policy_dir.mkdir(parents=True, exist_ok=True)
    path = policy_dir / sidecar_filename(out.scenario_id, out.policy_label)
    doc = {
        "scenario_id": out.scenario_id,
        "policy": out.policy_label,
        "t_start": out.t_start,
        "horizon": out.horizon,
        "speed": out.speed,
        "ambulances": [
            {
                "id": s.id,
                "type": {"id": s.amb_type.id, "label": s.amb_type.label,
                         "rank": s.amb_type.rank},
                "home": _point(s.home_base),
                "trips": [[p.lat, p.lon] for p in s.trips],
                "times": list(s.times),
                "types": [int(t) for t in s.types],
            }
            for s in out.ambulances
        ],
        "calls": [
            {
                "id": c.id, "t_c": c.t_c, "loc": _point(c.loc),
                "type": {"id": c.call_type.id, "label": c.call_type.label,
                         "priority": int(c.call_type.priority), "theta": c.call_type.theta,
                         "required_rank": c.call_type.required_rank},
                "service_class": c.service_class.value,
                "time_on_scene": c.time_on_scene,
                "hospital": _point(c.hospital), "time_at_hospital": c.time_at_hospital,
                "cleaning_station": _point(c.cleaning_station),
                "cleaning_time": c.cleaning_time,
            }
            for c in out.calls
        ],
        "records": {
            str(cid): dataclasses.asdict(rec) for cid, rec in out.records.items()
        },
        "timelines": {
            str(cid): {k: (None if isinstance(v, float) and math.isnan(v) else v)
                       for k, v in dataclasses.asdict(tl).items()}
            for cid, tl in out.timelines.items()
        },
    }
    path.write_text(json.dumps(doc))
    return path


def read_sidecar(path) -> SimOutput:
    doc = json.loads(Path(path).read_text())
    ambulances = []
    for a in doc["ambulances"]:
        t = a["type"]
        ambulances.append(AmbulanceState(
            id=a["id"],
            amb_type=AmbulanceType(t["id"], t["label"], t["rank"]),
            t_f=0.0, loc_f=_unpoint(a["trips"][0]), t_b=0.0, loc_b=_unpoint(a["trips"][0]),
            home_base=_unpoint(a["home"]),
            trips=[_unpoint(p) for p in a["trips"]],
            times=list(a["times"]),
            types=[TripType(t) for t in a["types"]],
        ))
    calls = []
    for c in doc["calls"]:
        t = c["type"]
        calls.append(EmergencyCall(
            id=c["id"], t_c=c["t_c"], loc=_unpoint(c["loc"]),
            call_type=CallType(t["id"], t["label"], Priority(t["priority"]), t["theta"],
                               t["required_rank"]),
            service_class=ServiceClass(c["service_class"]),
            time_on_scene=c["time_on_scene"], hospital=_unpoint(c["hospital"]),
            time_at_hospital=c["time_at_hospital"],
            cleaning_station=_unpoint(c["cleaning_station"]),
            cleaning_time=c["cleaning_time"],
        ))
    records = {int(k): CallRecord(**v) for k, v in doc["records"].items()}
    timelines = {}
    for k, v in doc["timelines"].items():
        v = {key: (math.nan if val is None and key not in
                   ("hospital_arrival", "hospital_depart", "cleaning_arrival")
                   else val) for key, val in v.items()}
        timelines[int(k)] = CallTimeline(**v)
    return SimOutput(
        scenario_id=doc["scenario_id"], policy_label=doc["policy"], ambulances=ambulances,
        records=records, calls=calls, events=[], timelines=timelines,
        t_start=doc["t_start"], horizon=doc["horizon"], speed=doc["speed"], audit=None,
    )


# -- historical call data and fitted models ---------------------------------------------

HISTORICAL_COLUMNS = ("timestamp", "lat", "lon", "type_id", "priority", "age",
                      "gender", "hospital", "district")


def read_historical(path) -> list[dict]:
    """CSV of historical emergencies. Required columns: timestamp (ISO 8601),
    lat, lon, type_id; the demographic columns are optional and kept as
    strings for filtering."""
    import csv

    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"timestamp", "lat", "lon", "type_id"} - set(reader.fieldnames or ())
        if missing:
            raise ParseError(f"historical data missing columns: {sorted(missing)}")
        for rec in reader:
            rows.append({
                "when": _dt.datetime.fromisoformat(rec["timestamp"]),
                "lat": float(rec["lat"]),
                "lon": float(rec["lon"]),
                "type_id": int(rec["type_id"]),
                "priority": rec.get("priority", ""),
                "age": rec.get("age", ""),
                "gender": rec.get("gender", ""),
                "hospital": rec.get("hospital", ""),
                "district": rec.get("district", ""),
            })
    return rows


def write_model(model, sp, tp_minutes: int, path) -> None:
    """Persist a fitted tabulated intensity model with its partitions."""
    doc = {
        "partition": {
            "kind": sp.kind,
            "bbox": None if sp.bbox is None else [sp.bbox.lat_min, sp.bbox.lat_max,
                                                  sp.bbox.lon_min, sp.bbox.lon_max],
            "nx": sp.nx, "ny": sp.ny,
            "polygons": sp.polygons,
        },
        "window_minutes": tp_minutes,
        "durations_h": model.durations_h.tolist(),
        "lambda": None if model.lambda_ is None else model.lambda_.tolist(),
        "beta": None if model.beta is None else model.beta.tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def read_model(path):
    from ems_sim import forecast

    doc = json.loads(Path(path).read_text())
    part = doc["partition"]
    if part["kind"] == "rect":
        bb = part["bbox"]
        sp = forecast.build_rect_partition(forecast.BBox(*bb), part["nx"], part["ny"])
    else:
        sp = forecast.SpacePartition(kind="custom",
                                     polygons=[[tuple(p) for p in ring]
                                               for ring in part["polygons"]])
    tp = forecast.TimePartition.weekly(doc["window_minutes"])
    model = forecast.IntensityModel(
        durations_h=np.asarray(doc["durations_h"], dtype=np.float64),
        lambda_=None if doc["lambda"] is None else np.asarray(doc["lambda"], dtype=np.float64),
        beta=None if doc["beta"] is None else np.asarray(doc["beta"], dtype=np.float64),
    )
    return model, sp, tp


def write_run_meta(folder, cfg: RunConfig, policies: Sequence[str]) -> Path:
    path = Path(folder) / "run_meta.json"
    path.write_text(json.dumps({"config": dataclasses.asdict(cfg),
                                "policies": list(policies)}))
    return path


def read_run_meta(folder) -> tuple[RunConfig, list[str]]:
    doc = json.loads((Path(folder) / "run_meta.json").read_text())
    return RunConfig(**doc["config"]), doc["policies"]


# -- deriving engine configs from a RunConfig -------------------------------------------

def synth_facilities(cfg: RunConfig) -> tuple[list[geo.GeoPoint], list[geo.GeoPoint],
                                              list[geo.GeoPoint]]:
    """Deterministic station/hospital/cleaning placement inside the bbox for
    configs that do not supply facility files."""
    lat_min, lat_max, lon_min, lon_max = cfg.bbox_tuple()
    rng = np.random.default_rng([cfg.seed, 11])

    def draw(n):
        return [geo.GeoPoint(float(rng.uniform(lat_min, lat_max)),
                             float(rng.uniform(lon_min, lon_max))) for _ in range(n)]

    return draw(cfg.n_bases), draw(cfg.n_hospitals), draw(cfg.n_cleaning)


def build_sim_config(cfg: RunConfig) -> SimConfig:
    stations = read_points(cfg.bases_file) if cfg.bases_file else None
    hospitals = read_points(cfg.hospitals_file) if cfg.hospitals_file else None
    cleaning = read_points(cfg.cleaning_file) if cfg.cleaning_file else None
    if stations is None or hospitals is None or cleaning is None:
        s, h, c = synth_facilities(cfg)
        stations = stations or s
        hospitals = hospitals or h
        cleaning = cleaning or c
    if len(hospitals) > MAX_HOSPITALS:
        raise ConfigError(f"{len(hospitals)} hospitals exceeds the maximum of {MAX_HOSPITALS}")
    if len(stations) > MAX_BASES:
        raise ConfigError(f"{len(stations)} bases exceeds the maximum of {MAX_BASES}")

    if cfg.ambulances_file:
        specs = read_ambulances(cfg.ambulances_file)
    else:
        specs = [
            AmbulanceSpec(i, DEFAULT_AMB_TYPES[i % len(DEFAULT_AMB_TYPES)],
                          i % len(stations), i % len(stations))
            for i in range(cfg.n_ambulances)
        ]

    call_types = [
        CallType(0, "low", Priority.LOW, cfg.theta_low),
        CallType(1, "intermediate", Priority.INTERMEDIATE, cfg.theta_mid),
        CallType(2, "high", Priority.HIGH, cfg.theta_high),
    ]
    cost_model = CostModel.build(call_types, list(DEFAULT_AMB_TYPES), cfg.mismatch_penalty)

    probs = [float(x) for x in cfg.class_probs.split(",")]
    if len(probs) != 4:
        raise ConfigError("class_probs needs 4 numbers", key="class_probs")
    class_probs = dict(zip(ServiceClass, probs))

    graph = load_graph(cfg.graph_file) if cfg.graph_file else None
    router = Router(graph, cfg.speed)
    policies = cfg.policy_ids()
    return SimConfig(
        stations=stations, hospitals=hospitals, cleaning_stations=cleaning,
        ambulances=specs, call_types=call_types, cost_model=cost_model,
        policy=policies[0] if policies else PolicyId.parse("CA"),
        horizon=cfg.horizon_days * 86400.0, use_home_base=cfg.h_use_fixed_bases,
        speed=cfg.speed,
        on_scene=DurationDist(cfg.on_scene_median_s, cfg.on_scene_sigma),
        at_hospital=DurationDist(cfg.at_hospital_median_s, cfg.at_hospital_sigma),
        cleaning=DurationDist(cfg.cleaning_median_s, cfg.cleaning_sigma),
        class_probs=class_probs, seed=cfg.seed, n_scenarios=cfg.n_scenarios,
        router=router, audit=cfg.audit,
    )
