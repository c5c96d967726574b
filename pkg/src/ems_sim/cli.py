"""Command-line driver.

Subcommands: simulate (batch run plus all writers), fit (intensity
estimation from historical data), generate (random call scenarios from a
fitted model), metrics (summary/ecdf/histogram export), trace (fixed-step
trajectory discretization of a finished run), serve (HTTP service).

Exit codes: 0 success, 2 configuration error, 1 anything else.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from pathlib import Path

from ems_sim import forecast, io_formats, metrics as metrics_mod, sim, trace
from ems_sim.domain import Priority
from ems_sim.errors import ConfigError, EmsSimError


def _overrides_from(args) -> dict:
    overrides: dict = {}
    for item in args.option or []:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, _, val = item.partition("=")
        overrides[key.strip()] = val.strip()
    for name in ("n_ambulances", "n_scenarios", "seed", "output_folder", "policies"):
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    return overrides


def _add_override_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("-f", "--config", help="configuration file (key = value lines)")
    p.add_argument("-o", "--option", action="append", metavar="KEY=VALUE",
                   help="override any configuration key (repeatable)")
    p.add_argument("--n-ambulances", dest="n_ambulances", type=int)
    p.add_argument("--n-scenarios", dest="n_scenarios", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-folder", dest="output_folder")
    p.add_argument("--policies")


def run_pipeline(cfg: io_formats.RunConfig) -> Path:
    """Full batch run: generate or load calls, simulate every policy, and
    write calls.txt, trajectory, response-time and sidecar files."""
    out_dir = Path(cfg.output_folder)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim_cfg = io_formats.build_sim_config(cfg)

    if cfg.calls_file:
        scenarios = io_formats.read_calls(cfg.calls_file)[: cfg.n_scenarios]
    else:
        scenarios = _generate_from_config(cfg, sim_cfg)
    io_formats.write_calls(scenarios, out_dir / "calls.txt")

    policies = cfg.policy_ids()
    io_formats.write_run_meta(out_dir, cfg, [p.label for p in policies])
    for p in policies:
        rt = out_dir / p.label / io_formats.response_times_filename(p.label)
        if rt.exists():
            rt.unlink()
    outputs = sim.run_batch(sim_cfg, scenarios, policies)
    for out in outputs:
        io_formats.write_trajectories(out, out_dir, sim_cfg)
        io_formats.write_response_times(out, out_dir)
        io_formats.write_sidecar(out, out_dir)
    return out_dir


def cmd_simulate(args) -> int:
    if not args.config:
        raise ConfigError("simulate requires a configuration file (-f)")
    cfg, warnings = io_formats.parse_config(args.config, _overrides_from(args))
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    out_dir = run_pipeline(cfg)
    policies = cfg.policy_ids()
    print(f"simulated {cfg.n_scenarios} scenario(s) x {len(policies)} policy(ies) "
          f"into {out_dir}")
    return 0


def _generate_from_config(cfg: io_formats.RunConfig, sim_cfg: sim.SimConfig):
    """Built-in generation model: uniform rate over the bbox, split evenly
    across the configured call types."""
    lat_min, lat_max, lon_min, lon_max = cfg.bbox_tuple()
    sp = forecast.build_rect_partition(forecast.BBox(lat_min, lat_max, lon_min, lon_max), 1, 1)
    tp = forecast.TimePartition.weekly(30)
    import numpy as np

    C = len(sim_cfg.call_types)
    lam = np.full((C, 1, tp.n_windows), cfg.rate_per_hour / C)
    model = forecast.IntensityModel(
        durations_h=np.array([w.duration_hours for w in tp.windows]), lambda_=lam)
    start = cfg.start()
    end = start + _dt.timedelta(days=int(round(cfg.horizon_days)))
    return forecast.generate_sample_paths(
        model, sp, tp, start, end, cfg.n_scenarios, cfg.seed, sim_cfg.call_types,
        class_probs=sim_cfg.class_probs)


def cmd_fit(args) -> int:
    rows = io_formats.read_historical(args.data)
    calls = [forecast.HistoricalCall(r["when"], _point(r), r["type_id"]) for r in rows]
    lat_min, lat_max, lon_min, lon_max = [float(x) for x in args.bbox.split(",")]
    sp = forecast.build_rect_partition(
        forecast.BBox(lat_min, lat_max, lon_min, lon_max), args.nx, args.ny)
    tp = forecast.TimePartition.weekly(args.window_minutes)
    start = _dt.date.fromisoformat(args.start)
    end = _dt.date.fromisoformat(args.end)
    n_types = 1 + max((c.type_id for c in calls), default=0)
    cube = forecast.aggregate(calls, sp, tp, n_types, start, end)
    model = forecast.fit_no_covariates(cube, tp)
    io_formats.write_model(model, sp, args.window_minutes, args.out)
    print(f"fitted {n_types} type(s) x {sp.n_zones} zone(s) x {tp.n_windows} window(s); "
          f"{cube.rejected} call(s) rejected; model written to {args.out}")
    return 0


def _point(row):
    from ems_sim.geo import GeoPoint

    return GeoPoint(row["lat"], row["lon"])


def cmd_generate(args) -> int:
    model, sp, tp = io_formats.read_model(args.model)
    start = _dt.date.fromisoformat(args.start)
    end = start + _dt.timedelta(days=args.days)
    call_types = list(io_formats.DEFAULT_CALL_TYPES)
    n_types = model.window_means().shape[0]
    while len(call_types) < n_types:
        call_types.append(io_formats.DEFAULT_CALL_TYPES[-1])
    paths = forecast.generate_sample_paths(model, sp, tp, start, end, args.n_paths,
                                           args.seed, call_types[:n_types])
    io_formats.write_calls(paths, args.out)
    total = sum(len(p) for p in paths)
    print(f"generated {args.n_paths} path(s), {total} call(s) into {args.out}")
    return 0


def _metric_filter(args) -> metrics_mod.MetricFilter:
    days = frozenset(int(d) for d in args.days.split(",")) if args.days else metrics_mod.ALL_DAYS
    priorities = (frozenset(Priority(int(p)) for p in args.priorities.split(","))
                  if args.priorities else metrics_mod.ALL_PRIORITIES)
    return metrics_mod.MetricFilter(days=days,
                                    window=(args.window_start, args.window_end),
                                    kind=args.kind, priorities=priorities)


def _load_run_samples(folder) -> dict[str, list]:
    folder = Path(folder)
    cfg, policies = io_formats.read_run_meta(folder)
    start_dow = cfg.start().weekday()
    samples: dict[str, list] = {}
    for label in policies:
        for sidecar in sorted((folder / label).glob("run_*_*.json")):
            out = io_formats.read_sidecar(sidecar)
            samples.setdefault(label, []).extend(
                metrics_mod.samples_from_output(out, start_dow))
    return samples


def cmd_metrics(args) -> int:
    samples = _load_run_samples(args.run_folder)
    f = _metric_filter(args)
    table = metrics_mod.export_table(samples, f)
    if args.out:
        Path(args.out).write_text(table)
    else:
        sys.stdout.write(table)
    if args.detail:
        doc = {}
        for policy, recs in sorted(samples.items()):
            edges, counts = metrics_mod.histogram(recs, f, args.bins)
            doc[policy] = {
                "ecdf": metrics_mod.ecdf(recs, f),
                "histogram": {"edges": edges.tolist(), "counts": counts.tolist()},
            }
        Path(args.detail).write_text(json.dumps(doc))
    return 0


def cmd_trace(args) -> int:
    folder = Path(args.run_folder)
    _cfg, policies = io_formats.read_run_meta(folder)
    wanted = [args.policy] if args.policy else policies
    n_files = 0
    for label in wanted:
        for sidecar in sorted((folder / label).glob("run_*_*.json")):
            out = io_formats.read_sidecar(sidecar)
            if args.scenario is not None and out.scenario_id != args.scenario:
                continue
            for s in out.ambulances:
                ride = trace.discretize(s.trips, s.times, s.types, args.t_step, out.speed)
                path = folder / label / (
                    f"discretized_{out.scenario_id}_{label}_{s.id}")
                with open(path, "w") as fh:
                    for k in range(len(ride)):
                        fh.write(f"{ride.times[k]!r} {ride.lat[k]!r} {ride.lon[k]!r} "
                                 f"{int(ride.types[k])}\n")
                n_files += 1
    print(f"wrote {n_files} discretized trajectory file(s) at t_step={args.t_step}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from ems_sim.api import create_app

    app = create_app(run_dir=args.run_folder, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ems-sim",
                                     description="EMS ambulance operations simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the batch simulation and write all outputs")
    _add_override_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a call-intensity model from historical data")
    p.add_argument("--data", required=True, help="historical calls CSV")
    p.add_argument("--bbox", required=True, help="lat_min,lat_max,lon_min,lon_max")
    p.add_argument("--nx", type=int, default=10)
    p.add_argument("--ny", type=int, default=10)
    p.add_argument("--window-minutes", dest="window_minutes", type=int, default=30)
    p.add_argument("--start", required=True, help="span start date (ISO)")
    p.add_argument("--end", required=True, help="span end date (ISO, exclusive)")
    p.add_argument("--out", required=True, help="model JSON output path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("generate", help="generate random call scenarios from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--start", required=True, help="start date (ISO)")
    p.add_argument("--days", type=int, default=7)
    p.add_argument("--n-paths", dest="n_paths", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="calls.txt output path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("metrics", help="summaries/ecdf/histograms of a finished run")
    p.add_argument("--run-folder", dest="run_folder", required=True)
    p.add_argument("--days", help="comma-separated weekday numbers, Monday=0")
    p.add_argument("--window-start", dest="window_start", type=int, default=0)
    p.add_argument("--window-end", dest="window_end", type=int, default=24 * 60)
    p.add_argument("--kind", choices=("raw", "penalized"), default="raw")
    p.add_argument("--priorities", help="comma-separated priority levels 0,1,2")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out", help="write the summary table here instead of stdout")
    p.add_argument("--detail", help="write per-policy ecdf/histogram JSON here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("trace", help="discretize trajectories of a finished run")
    p.add_argument("--run-folder", dest="run_folder", required=True)
    p.add_argument("--t-step", dest="t_step", type=float, required=True)
    p.add_argument("--scenario", type=int)
    p.add_argument("--policy")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--run-folder", dest="run_folder")
    p.add_argument("--ui-dir", dest="ui_dir")
    p.set_defaults(func=cmd_serve)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except EmsSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
