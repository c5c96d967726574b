"""HTTP/JSON service: runs, playback frames, metrics, forecasts, data charts.

Runs execute in a bounded worker pool; clients poll GET /runs/{id}. Every
payload is derived from the persisted run folder, so a restarted server
serves the same responses. Field names are snake_case throughout.
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import hashlib
import math
import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware

from ems_sim import forecast, io_formats, metrics as metrics_mod, sim
from ems_sim.domain import Priority
from ems_sim.errors import ConfigError, EmptySelection, EmsSimError
from ems_sim.geo import GeoPoint


@dataclasses.dataclass
class RunEntry:
    run_id: str
    status: str               # queued | running | done | failed
    config: dict
    folder: str
    error: str = ""


class Registry:
    def __init__(self, root: Path, max_workers: int, max_pending: int = 32):
        self.root = root
        self.lock = threading.Lock()
        self.entries: dict[str, RunEntry] = {}
        self.by_key: dict[str, str] = {}
        self.pending = 0
        self.max_pending = max_pending
        self.pool = ThreadPoolExecutor(max_workers=max_workers)
        self.sidecars: dict[tuple, sim.SimOutput] = {}

    def submit(self, cfg: io_formats.RunConfig, key: Optional[str]) -> RunEntry:
        from ems_sim.cli import run_pipeline

        with self.lock:
            if key and key in self.by_key:
                return self.entries[self.by_key[key]]
            if self.pending >= self.max_pending:
                raise HTTPException(503, "run queue is full")
            run_id = uuid.uuid4().hex[:12]
            folder = self.root / run_id
            cfg = dataclasses.replace(cfg, output_folder=str(folder))
            entry = RunEntry(run_id, "queued", dataclasses.asdict(cfg), str(folder))
            self.entries[run_id] = entry
            if key:
                self.by_key[key] = run_id
            self.pending += 1

        def work():
            with self.lock:
                entry.status = "running"
            try:
                run_pipeline(cfg)
                with self.lock:
                    entry.status = "done"
            except Exception as exc:  # surfaced through GET /runs/{id}
                with self.lock:
                    entry.status = "failed"
                    entry.error = str(exc)
            finally:
                with self.lock:
                    self.pending -= 1

        self.pool.submit(work)
        return entry

    def get(self, run_id: str) -> RunEntry:
        with self.lock:
            entry = self.entries.get(run_id)
        if entry is None:
            raise HTTPException(404, f"unknown run {run_id}")
        return entry

    def output(self, entry: RunEntry, scenario: int, policy: str) -> sim.SimOutput:
        key = (entry.run_id, scenario, policy)
        with self.lock:
            cached = self.sidecars.get(key)
        if cached is not None:
            return cached
        path = Path(entry.folder) / policy / io_formats.sidecar_filename(scenario, policy)
        if not path.exists():
            raise HTTPException(404, f"no output for scenario {scenario} policy {policy}")
        out = io_formats.read_sidecar(path)
        with self.lock:
            self.sidecars[key] = out
        return out


def _require_done(entry: RunEntry) -> None:
    if entry.status != "done":
        raise HTTPException(409, f"run {entry.run_id} is {entry.status}")


def _parse_filter(days: Optional[str], window: Optional[str], kind: str,
                  priority: Optional[str]) -> metrics_mod.MetricFilter:
    try:
        f_days = (frozenset(int(d) for d in days.split(","))
                  if days else metrics_mod.ALL_DAYS)
        f_priorities = (frozenset(Priority(int(p)) for p in priority.split(","))
                        if priority else metrics_mod.ALL_PRIORITIES)
        f_window = (0, 24 * 60)
        if window:
            a, _, b = window.partition("-")
            f_window = (int(a), int(b))
        return metrics_mod.MetricFilter(days=f_days, window=f_window, kind=kind,
                                        priorities=f_priorities)
    except (ValueError, KeyError) as exc:
        raise HTTPException(400, f"bad filter: {exc}") from exc


def create_app(run_dir: Optional[str] = None, ui_dir: Optional[str] = None,
               max_workers: Optional[int] = None) -> FastAPI:
    app = FastAPI(title="ems-sim service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    root = Path(run_dir) if run_dir else Path.cwd() / "runs"
    root.mkdir(parents=True, exist_ok=True)
    registry = Registry(root, max_workers or 2 * (os.cpu_count() or 1))
    app.state.registry = registry
    app.state.model = None          # (IntensityModel, SpacePartition, TimePartition)
    app.state.dataset = None        # historical rows

    # -- runs -------------------------------------------------------------------

    @app.post("/runs", status_code=202)
    def post_run(body: dict = Body(...)):
        key = body.pop("idempotency_key", None)
        if key is None:
            key = hashlib.sha256(repr(sorted(body.items())).encode()).hexdigest()
        body.setdefault("output_folder", "placeholder")
        try:
            cfg, warnings = io_formats.parse_config(None, body)
        except ConfigError as exc:
            raise HTTPException(400, str(exc)) from exc
        if warnings:
            raise HTTPException(400, "; ".join(warnings))
        entry = registry.submit(cfg, key)
        return {"run_id": entry.run_id, "status": entry.status}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        entry = registry.get(run_id)
        return {"run_id": entry.run_id, "status": entry.status, "error": entry.error,
                "config": entry.config}

    @app.get("/runs/{run_id}/frames")
    def get_frames(run_id: str, t_step: float = Query(..., gt=0),
                   from_t: float = Query(..., alias="from"),
                   to_t: float = Query(..., alias="to"),
                   scenario: int = 0, policy: Optional[str] = None):
        if from_t > to_t:
            raise HTTPException(400, "from > to")
        entry = registry.get(run_id)
        _require_done(entry)
        policy = policy or io_formats.read_run_meta(entry.folder)[1][0]
        out = registry.output(entry, scenario, policy)
        lo = max(from_t, out.t_start)
        hi = min(to_t, out.t_end)
        k0 = math.ceil(lo / t_step - 1e-12)
        frames = []
        k = k0
        while k * t_step <= hi + 1e-12:
            t = k * t_step
            snap = sim.snapshot(out, min(t, out.t_end))
            frames.append({
                "t": t,
                "ambulances": [
                    {
                        "id": a.amb_id, "lat": a.position.lat, "lon": a.position.lon,
                        "trip_type": int(a.trip_type),
                        "future_path": (
                            [[a.position.lat, a.position.lon],
                             [a.destination.lat, a.destination.lon]]
                            if a.destination is not None else []),
                    }
                    for a in snap.ambulances
                ],
                "calls": [
                    {"id": c.call_id, "lat": c.position.lat, "lon": c.position.lon,
                     "priority": int(c.priority), "phase": c.phase}
                    for c in snap.calls
                ],
            })
            k += 1
        return {"run_id": run_id, "scenario": scenario, "policy": policy,
                "t_step": t_step, "frames": frames}

    @app.get("/runs/{run_id}/metrics")
    def get_metrics(run_id: str, days: Optional[str] = None, window: Optional[str] = None,
                    kind: str = "raw", priority: Optional[str] = None, bins: int = 10):
        entry = registry.get(run_id)
        _require_done(entry)
        cfg, policies = io_formats.read_run_meta(entry.folder)
        start_dow = cfg.start().weekday()
        f = _parse_filter(days, window, kind, priority)
        result = {}
        for label in policies:
            samples = []
            for sidecar in sorted((Path(entry.folder) / label).glob("run_*_*.json")):
                out = io_formats.read_sidecar(sidecar)
                samples.extend(metrics_mod.samples_from_output(out, start_dow))
            try:
                summary = metrics_mod.summarize(samples, f)
                edges, counts = metrics_mod.histogram(samples, f, bins)
                result[label] = {
                    "summary": dataclasses.asdict(summary),
                    "ecdf": metrics_mod.ecdf(samples, f),
                    "histogram": {"edges": edges.tolist(), "counts": counts.tolist()},
                }
            except EmptySelection as exc:
                raise HTTPException(422, str(exc)) from exc
        return result

    # -- forecast ----------------------------------------------------------------

    @app.post("/forecast/fit")
    def post_forecast_fit(body: dict = Body(...)):
        try:
            rows = io_formats.read_historical(body["data_path"])
            calls = [forecast.HistoricalCall(r["when"], GeoPoint(r["lat"], r["lon"]),
                                             r["type_id"]) for r in rows]
            bb = forecast.BBox(*body["bbox"])
            sp = forecast.build_rect_partition(bb, int(body.get("nx", 10)),
                                               int(body.get("ny", 10)))
            tp = forecast.TimePartition.weekly(int(body.get("window_minutes", 30)))
            start = _dt.date.fromisoformat(body["start"])
            end = _dt.date.fromisoformat(body["end"])
            n_types = 1 + max((c.type_id for c in calls), default=0)
            cube = forecast.aggregate(calls, sp, tp, n_types, start, end)
            model = forecast.fit_no_covariates(cube, tp)
        except (KeyError, ValueError, OSError, EmsSimError) as exc:
            raise HTTPException(400, str(exc)) from exc
        app.state.model = (model, sp, tp, start, end)
        return {"zones": sp.n_zones, "windows": tp.n_windows, "types": n_types,
                "rejected": cube.rejected}

    def _need_model():
        if app.state.model is None:
            raise HTTPException(404, "no fitted model; POST /forecast/fit first")
        return app.state.model

    @app.get("/forecast/heatmap")
    def forecast_heatmap(priority: Optional[str] = None):
        model, sp, tp, start, end = _need_model()
        means = model.window_means()          # (C, I, T)
        occ = tp.occurrences(start, end)
        types = (sorted(int(p) for p in priority.split(","))
                 if priority else range(means.shape[0]))
        per_zone = np.zeros(sp.n_zones)
        for c in types:
            if 0 <= c < means.shape[0]:
                per_zone += (means[c] * occ[None, :]).sum(axis=1)
        return {"zones": {str(i): float(per_zone[i]) for i in range(sp.n_zones)}}

    @app.get("/forecast/lineplot")
    def forecast_lineplot(n_paths: int = 100, seed: int = 0,
                          priority: Optional[str] = None):
        model, sp, tp, start, end = _need_model()
        call_types = list(io_formats.DEFAULT_CALL_TYPES)
        C = model.window_means().shape[0]
        while len(call_types) < C:
            call_types.append(call_types[-1])
        paths = forecast.generate_sample_paths(model, sp, tp, start, end, n_paths, seed,
                                               call_types[:C])
        priorities = ({Priority(int(p)) for p in priority.split(",")}
                      if priority else None)
        summary = forecast.path_summary(paths, tp, start, end, priorities=priorities)
        return {
            "periods": [list(p) if isinstance(p, tuple) else p for p in summary["periods"]],
            "mean": summary["mean"].tolist(),
            "q05": summary["q_low"].tolist(),
            "q95": summary["q_high"].tolist(),
        }

    # -- historical data charts -----------------------------------------------------

    @app.post("/data/load")
    def post_data_load(body: dict = Body(...)):
        try:
            app.state.dataset = io_formats.read_historical(body["path"])
        except (KeyError, OSError, EmsSimError, ValueError) as exc:
            raise HTTPException(400, str(exc)) from exc
        return {"rows": len(app.state.dataset)}

    def _need_rows():
        if app.state.dataset is None:
            raise HTTPException(404, "no dataset loaded; POST /data/load first")
        return app.state.dataset

    def _filter_rows(rows, start, end, window, types, priorities, ages, genders,
                     hospitals, districts):
        out = []
        w_lo, w_hi = 0, 24 * 60
        if window:
            a, _, b = window.partition("-")
            w_lo, w_hi = int(a), int(b)
        for r in rows:
            when = r["when"]
            if start and when.date() < _dt.date.fromisoformat(start):
                continue
            if end and when.date() >= _dt.date.fromisoformat(end):
                continue
            minute = when.hour * 60 + when.minute
            if not (w_lo <= minute < w_hi):
                continue
            if types and str(r["type_id"]) not in types.split(","):
                continue
            if priorities and r["priority"] not in priorities.split(","):
                continue
            if ages and r["age"] not in ages.split(","):
                continue
            if genders and r["gender"] not in genders.split(","):
                continue
            if hospitals and r["hospital"] not in hospitals.split(","):
                continue
            if districts and r["district"] not in districts.split(","):
                continue
            out.append(r)
        return out

    @app.get("/data/lineplot")
    def data_lineplot(start: Optional[str] = None, end: Optional[str] = None,
                      window: Optional[str] = None, types: Optional[str] = None,
                      priorities: Optional[str] = None, ages: Optional[str] = None,
                      genders: Optional[str] = None, hospitals: Optional[str] = None,
                      districts: Optional[str] = None, minutes: int = 30):
        rows = _filter_rows(_need_rows(), start, end, window, types, priorities, ages,
                            genders, hospitals, districts)
        counts: dict[str, int] = {}
        for r in rows:
            slot = (r["when"].hour * 60 + r["when"].minute) // minutes
            key = f"{r['when'].date().isoformat()}T{slot}"
            counts[key] = counts.get(key, 0) + 1
        series = sorted(counts.items())
        return {"periods": [k for k, _ in series], "counts": [v for _, v in series]}

    @app.get("/data/heatmap")
    def data_heatmap(bbox: str, nx: int = 10, ny: int = 10,
                     start: Optional[str] = None, end: Optional[str] = None,
                     window: Optional[str] = None, types: Optional[str] = None,
                     priorities: Optional[str] = None):
        rows = _filter_rows(_need_rows(), start, end, window, types, priorities,
                            None, None, None, None)
        try:
            bb = forecast.BBox(*[float(x) for x in bbox.split(",")])
        except (ValueError, EmsSimError) as exc:
            raise HTTPException(400, str(exc)) from exc
        sp = forecast.build_rect_partition(bb, nx, ny)
        per_zone = [0] * sp.n_zones
        for r in rows:
            zone = forecast.locate(sp, GeoPoint(r["lat"], r["lon"]))
            if zone is not None:
                per_zone[zone] += 1
        return {"zones": {str(i): per_zone[i] for i in range(sp.n_zones)}}

    _CATEGORIES = {
        "day": lambda r: str(r["when"].weekday()),
        "type": lambda r: str(r["type_id"]),
        "priority": lambda r: r["priority"] or "unknown",
        "district": lambda r: r["district"] or "unknown",
        "gender": lambda r: r["gender"] or "unknown",
        "hospital": lambda r: r["hospital"] or "unknown",
    }

    def _tally(rows, by):
        if by not in _CATEGORIES:
            raise HTTPException(400, f"unknown category {by!r}")
        key = _CATEGORIES[by]
        counts: dict[str, int] = {}
        for r in rows:
            k = key(r)
            counts[k] = counts.get(k, 0) + 1
        return counts

    @app.get("/data/histogram")
    def data_histogram(by: str = "day", start: Optional[str] = None,
                       end: Optional[str] = None, window: Optional[str] = None,
                       ages: Optional[str] = None):
        rows = _filter_rows(_need_rows(), start, end, window, None, None, ages,
                            None, None, None)
        counts = _tally(rows, by)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return {"by": by, "categories": [k for k, _ in ranked],
                "counts": [v for _, v in ranked]}

    @app.get("/data/piechart")
    def data_piechart(by: str = "type", start: Optional[str] = None,
                      end: Optional[str] = None, window: Optional[str] = None,
                      ages: Optional[str] = None):
        rows = _filter_rows(_need_rows(), start, end, window, None, None, ages,
                            None, None, None)
        counts = _tally(rows, by)
        total = sum(counts.values())
        if total == 0:
            raise HTTPException(422, "no rows match the filter")
        return {"by": by,
                "fractions": {k: v / total for k, v in sorted(counts.items())}}

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
