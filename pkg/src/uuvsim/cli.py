"""Command line interface: plan, run, montecarlo, field-dump, echo.

Every output file starts with a comment line naming the artifact version,
scenario and seed.  CSV files are comma-separated with '.' decimals and LF
line endings; identical (scenario, seed) runs produce byte-identical files.
Exit codes: 0 success, 2 validation error, 3 mission failure, 4 IO error.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, seeding
from .env import current_grid
from .errors import (NoFeasibleRouteError, ScenarioParseError,
                     ScenarioValidationError, UUVSimError)
from .global_planner import plan_global
from .mission import MissionReport, run_mission
from .network import edge_metrics
from .scenario import (Scenario, build_field, build_map, build_network_from_spec,
                       de_config_from_spec, echo, resolve_scenario)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.17g}"  # exact float64 round-trip
    return str(x)


def _header(sc: Scenario, seed: int) -> str:
    return f"# uuvsim={__version__} scenario={sc.name} seed={seed}"


def _write_csv(path: Path, sc: Scenario, seed: int, columns: list[str], rows) -> None:
    lines = [_header(sc, seed), ",".join(columns)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def write_report_text(report: MissionReport, sc: Scenario, path: Path) -> None:
    """One structured record; wall-clock time is deliberately not serialized."""
    lines = [
        _header(sc, report.seed),
        f"success: {report.success}",
        f"failure_reason: {report.failure_reason}",
        f"global_replans: {report.global_replans}",
        f"global_path_time_s: {_fmt(report.path_time)}",
        f"residual_time_s: {_fmt(report.residual_time)}",
        f"total_value: {_fmt(report.total_value)}",
        f"stations_visited: {report.stations_visited}",
        f"total_cost: {_fmt(report.total_cost)}",
        f"legs: {len(report.legs)}",
        f"sequence: {'-'.join(str(s) for s in report.executed_sequence)}",
    ]
    path.write_text("\n".join(lines) + "\n")


def write_outputs(report: MissionReport, sc: Scenario, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = report.seed
    paths = []

    p = out_dir / "report.txt"
    write_report_text(report, sc, p)
    paths.append(p)

    p = out_dir / "legs.csv"
    _write_csv(p, sc, seed,
               ["leg", "from", "to", "planned_s", "actual_s", "local_replans", "collided",
                "aborted", "max_surge", "max_sway", "max_yaw_rate_deg", "value_gained"],
               [(i, leg.from_id, leg.to_id, leg.planned, leg.actual, leg.local_replans,
                 leg.collided, leg.aborted, leg.max_surge, leg.max_sway,
                 math.degrees(leg.max_yaw_rate), leg.value_gained)
                for i, leg in enumerate(report.legs)])
    paths.append(p)

    p = out_dir / "ticks.csv"
    _write_csv(p, sc, seed, ["t", "x", "y", "z", "yaw", "leg"], report.ticks)
    paths.append(p)

    p = out_dir / "replans.csv"
    _write_csv(p, sc, seed, ["t", "kind", "reason"], report.replans)
    paths.append(p)

    p = out_dir / "paths.csv"
    _write_csv(p, sc, seed,
               ["leg", "sample", "x", "y", "z", "yaw", "pitch", "surge", "sway",
                "yaw_rate", "t"], report.path_rows)
    paths.append(p)

    p = out_dir / "de_traces.csv"
    rows = []
    for label, trace in report.de_traces:
        rows.extend((label, g, c) for g, c in enumerate(trace))
    _write_csv(p, sc, seed, ["plan", "generation", "best_cost"], rows)
    paths.append(p)
    return paths


def run_once(sc: Scenario, seed: int | None, out_dir: Path) -> tuple[MissionReport, list[Path]]:
    """Run one mission and write the report, leg/tick/replan tables and DE traces."""
    report = run_mission(sc, seed)
    paths = write_outputs(report, sc, out_dir)
    paths.append(field_dump(sc, report.seed, 100, out_dir / "field.csv"))
    return report, paths


def field_dump(sc: Scenario, seed: int, resolution: int, out_path: Path,
               extent: tuple[float, float] | None = None) -> Path:
    """Sample the current field on a regular grid and write x,y,v_cx,v_cy rows."""
    fld = build_field(sc, seed)
    ext = extent if extent is not None else (sc.field.x, sc.field.y)
    xs = np.linspace(0.0, ext[0], resolution)
    ys = np.linspace(0.0, ext[1], resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    vel = current_grid(pts, fld)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rows = ((pts[i, 0], pts[i, 1], vel[i, 0], vel[i, 1]) for i in range(pts.shape[0]))
    _write_csv(out_path, sc, seed, ["x", "y", "v_cx", "v_cy"], rows)
    return out_path


@dataclass
class BatchSummary:
    rows: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    @property
    def reports(self) -> list[MissionReport]:
        return [r["report"] for r in self.rows]


_AGG_COLUMNS = ["global_replans", "path_time", "residual_time", "total_value",
                "stations_visited", "total_cost", "wall_clock"]


def aggregate_rows(rows: list[dict]) -> dict:
    """mean, sample std and standard error per column over successful trials."""
    ok = [r for r in rows if r["success"]]
    out = {"trials": len(rows), "successes": len(ok),
           "success_rate": len(ok) / len(rows) if rows else 0.0}
    for col in _AGG_COLUMNS:
        vals = np.array([float(r[col]) for r in ok])
        if len(vals) == 0:
            out[col] = {"mean": math.nan, "std": math.nan, "se": math.nan}
            continue
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        out[col] = {"mean": float(np.mean(vals)), "std": std,
                    "se": std / math.sqrt(len(vals))}
    return out


def _trial_row(trial: int, seed: int, report: MissionReport | None, error: str = "") -> dict:
    if report is None:
        return {"trial": trial, "seed": seed, "success": False, "error": error,
                **{col: math.nan for col in _AGG_COLUMNS}, "report": None}
    return {"trial": trial, "seed": seed, "success": report.success,
            "error": report.failure_reason,
            "global_replans": report.global_replans, "path_time": report.path_time,
            "residual_time": report.residual_time, "total_value": report.total_value,
            "stations_visited": report.stations_visited, "total_cost": report.total_cost,
            "wall_clock": report.wall_clock, "report": report}


def _run_trial(args) -> tuple[int, int, MissionReport | None, str]:
    sc, trial, seed = args
    count = None
    if sc.montecarlo.stations is not None:
        lo, hi = (int(v) for v in sc.montecarlo.stations)
        count = int(seeding.stream(seed, seeding.NETWORK, 9).integers(lo, hi + 1))
    try:
        if count is None:
            report = run_mission(sc, seed)
        else:
            cmap = build_map(sc, seed)
            net = build_network_from_spec(sc, cmap, seed, station_count=count)
            report = run_mission(sc, seed, network=net)
        return trial, seed, report, ""
    except UUVSimError as exc:
        return trial, seed, None, str(exc)


def run_monte_carlo(sc: Scenario, trials: int, base_seed: int, out_dir: Path | None = None,
                    jobs: int = 1) -> BatchSummary:
    """Independent trials with seeds base_seed + i; failures recorded, batch continues."""
    if trials < 1:
        raise ScenarioValidationError("trials must be >= 1")
    tasks = [(sc, i, base_seed + i) for i in range(trials)]
    results = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial, tasks))
    else:
        results = [_run_trial(t) for t in tasks]
    results.sort(key=lambda r: r[0])

    summary = BatchSummary()
    for trial, seed, report, error in results:
        summary.rows.append(_trial_row(trial, seed, report, error))
    summary.aggregates = aggregate_rows(summary.rows)

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        cols = ["trial", "seed", "success"] + _AGG_COLUMNS + ["error"]
        _write_csv(out_dir / "trials.csv", sc, base_seed, cols,
                   [[row[c] for c in cols] for row in summary.rows])
        lines = [_header(sc, base_seed),
                 f"trials: {summary.aggregates['trials']}",
                 f"successes: {summary.aggregates['successes']}",
                 f"success_rate: {_fmt(summary.aggregates['success_rate'])}"]
        for col in _AGG_COLUMNS:
            agg = summary.aggregates[col]
            lines.append(f"{col}: mean={_fmt(agg['mean'])} std={_fmt(agg['std'])} se={_fmt(agg['se'])}")
        (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    return summary


# --- commands ---------------------------------------------------------------


def _cmd_plan(sc: Scenario, args) -> int:
    seed = sc.seed if args.seed is None else args.seed
    cmap = build_map(sc, seed)
    net = build_network_from_spec(sc, cmap, seed)
    cfg = de_config_from_spec(sc.de_global)
    rng = seeding.stream(seed, seeding.DE_GLOBAL, 0)
    try:
        plan = plan_global(net, net.start_id, net.goal_id,
                           sc.vehicle.time_budget * sc.mission.budget_margin,
                           sc.vehicle.cruise_speed, cfg,
                           restarts=sc.de_global.restarts, rng=rng)
    except NoFeasibleRouteError as exc:
        print(f"no feasible route: {exc}", file=sys.stderr)
        return 3
    route = plan.route
    print(f"route: {'-'.join(str(s) for s in route.sequence)}")
    print(f"time: {route.time:.1f} s of {sc.vehicle.time_budget:.0f} s budget")
    print(f"value: {route.total_value:.0f}  stations: {route.stations_visited}  "
          f"cost: {plan.cost:.4f}")
    print("leg,from,to,distance_m,time_s")
    rows = []
    for idx, (a, b) in enumerate(zip(route.sequence, route.sequence[1:])):
        d, t = edge_metrics(net, a, b, sc.vehicle.cruise_speed)
        rows.append((idx, a, b, d, t))
        print(f"{idx},{a},{b},{d:.1f},{t:.1f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "route.csv", sc, seed, ["leg", "from", "to", "distance_m", "time_s"], rows)
        _write_csv(out / "de_traces.csv", sc, seed, ["plan", "generation", "best_cost"],
                   [(f"global-r{i}", g, c) for i, tr in enumerate(plan.traces)
                    for g, c in enumerate(tr)])
    return 0


def _cmd_run(sc: Scenario, args) -> int:
    out_dir = Path(args.out) if args.out else Path("out") / sc.name
    if args.dt is not None:
        sc.mission.dt = float(args.dt)
    report, paths = run_once(sc, args.seed, out_dir)
    print(f"success: {report.success}")
    if report.failure_reason:
        print(f"reason: {report.failure_reason}")
    print(f"global_replans: {report.global_replans}")
    print(f"path_time: {report.path_time:.1f} s  residual: {report.residual_time:.1f} s")
    print(f"value: {report.total_value:.0f}  stations: {report.stations_visited}  "
          f"cost: {report.total_cost:.4f}  wall: {report.wall_clock:.1f} s")
    for p in paths:
        print(f"wrote {p}")
    return 0 if report.success else 3


def _cmd_montecarlo(sc: Scenario, args) -> int:
    out_dir = Path(args.out) if args.out else Path("out") / f"{sc.name}-mc"
    base = sc.seed if args.seed is None else args.seed
    summary = run_monte_carlo(sc, args.trials, base, out_dir, jobs=args.jobs)
    agg = summary.aggregates
    print(f"trials: {agg['trials']}  successes: {agg['successes']}")
    for col in _AGG_COLUMNS:
        a = agg[col]
        print(f"{col}: mean={a['mean']:.3f} std={a['std']:.3f} se={a['se']:.3f}")
    print(f"wrote {out_dir / 'trials.csv'}")
    return 0


def _cmd_field_dump(sc: Scenario, args) -> int:
    seed = sc.seed if args.seed is None else args.seed
    out = Path(args.out) if args.out else Path(f"{sc.name}-field.csv")
    if out.is_dir():
        out = out / "field.csv"
    extent = tuple(args.extent) if args.extent else None
    path = field_dump(sc, seed, args.resolution, out, extent=extent)
    print(f"wrote {path}")
    return 0


def _cmd_echo(sc: Scenario, args) -> int:
    text = echo(sc)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uuvsim",
                                     description="Mission planning simulator for an "
                                                 "underwater vehicle in a drifting sensor network")
    parser.add_argument("--version", action="version", version=f"uuvsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True,
                       help="scenario file path or bundled scenario name")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", default=None, help="output directory or file")

    p = sub.add_parser("plan", help="plan the initial global route only")
    common(p)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("run", help="run a single mission")
    common(p)
    p.add_argument("--dt", type=float, default=None, help="tick length in seconds")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("montecarlo", help="run a batch of seeded trials")
    common(p)
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=_cmd_montecarlo)

    p = sub.add_parser("field-dump", help="sample the current field to CSV")
    common(p)
    p.add_argument("--resolution", type=int, default=200, help="grid points per axis")
    p.add_argument("--extent", type=float, nargs=2, default=None,
                   metavar=("X", "Y"), help="sample window size in meters")
    p.set_defaults(func=_cmd_field_dump)

    p = sub.add_parser("echo", help="validate a scenario and emit it with defaults filled")
    common(p)
    p.set_defaults(func=_cmd_echo)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        sc = resolve_scenario(args.scenario)
    except (ScenarioParseError, ScenarioValidationError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(sc, args)
    except (ScenarioParseError, ScenarioValidationError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
