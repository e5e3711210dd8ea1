"""Command-line interface: every pipeline as a subcommand.

Exit codes: 0 success, 1 usage or input/output failure, 2 statistical
failure (censored runs, failed claims, or a non-converged fit). Every
command writes a manifest next to its outputs with the resolved
configuration, master seed, versions, wall times, and output digests;
rerunning the recorded command with the same seed reproduces the data
outputs byte for byte (manifests differ only in the timing fields).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .contact import ContactConfig
from .core import RawStream, derive_run_seed
from .fit import FormKind, fit_form
from .ingest import (
    IngestError,
    build_transition_model,
    filter_by_contact_degree,
    flood_over_traces,
    load_road_graph,
    load_stations,
    load_traces,
    load_trips,
    replay_flood,
    synth_trajectory,
)
from .mobility import MobilityPolicy, PolicyKind
from .oracle import (
    SegmentCase,
    check_independence,
    check_lower_bound,
    check_strong_overlap,
    estimate_pair_connection,
    estimate_segment_connection,
    pair_connection_band,
)
from .spread import (
    SCHEMA_VERSION,
    RunRecord,
    SimConfig,
    SweepPoint,
    SweepResult,
    run_realization,
    run_sweep,
    resolve_threads,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STATISTICAL = 2

_POLICIES = {
    "rw": PolicyKind.RANDOM_WALK,
    "rwp": PolicyKind.RANDOM_WAYPOINT,
    "mrwp": PolicyKind.MANHATTAN_WAYPOINT,
    "levy": PolicyKind.LEVY_WALK,
}


class CliError(Exception):
    """Usage or I/O failure; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _utc(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def _write_manifest(
    manifest_path: Path, command: str, config: dict, seed: int,
    outputs: list[Path], started: float,
) -> None:
    body = {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "backend": _backend.BACKEND_NAME,
        "command": command,
        "config": config,
        "master_seed": seed,
        "started_utc": _utc(started),
        "ended_utc": _utc(time.time()),
        "outputs": [
            {"path": str(p), "sha256": _sha256(p)} for p in outputs
        ],
    }
    _dump_json(body, manifest_path)


def _build_policy(args) -> MobilityPolicy:
    kind = _POLICIES[args.policy]
    if kind is PolicyKind.LEVY_WALK:
        if args.alpha is None:
            raise CliError("--policy levy requires --alpha")
        return MobilityPolicy.levy_walk(args.alpha)
    if args.alpha is not None:
        raise CliError("--alpha is only valid with --policy levy")
    return MobilityPolicy(kind)


# ---------------------------------------------------------------------------
# grid-sim
# ---------------------------------------------------------------------------


def _cmd_grid_sim(args) -> int:
    started = time.time()
    policy = _build_policy(args)
    cfg = SimConfig(
        n=args.n, m=args.m, policy=policy,
        contact=ContactConfig(args.radius),
        max_steps=args.max_steps, seed=args.seed,
    )
    res = run_realization(cfg)
    out = Path(args.out)
    body = {
        "schema_version": SCHEMA_VERSION,
        "n": args.n,
        "m": args.m,
        "policy": args.policy,
        "alpha": args.alpha,
        "radius": args.radius,
        "seed": args.seed,
        "max_steps": cfg.resolved_max_steps,
        "flood_time": res.flood_time,
        "censored": res.censored,
        "broadcast_times": list(res.broadcast_times),
        "contact_count": res.contact_count,
        "steps_run": res.steps_run,
    }
    _dump_json(body, out)
    _write_manifest(
        out.with_name(out.stem + ".manifest.json"), "grid-sim",
        _config_dict(args), args.seed, [out], started,
    )
    print(f"flood_time={res.flood_time} censored={res.censored} -> {out}")
    return EXIT_STATISTICAL if res.censored else EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

_SWEEP_DEFAULTS = {
    "n": 100, "m": 100, "policy": "mrwp", "alpha": None, "radius": 0,
    "seed": 0, "max_steps": None, "reps": 100, "threads": None,
    "out_dir": "sweep_out",
}


def _apply_config_file(args, parser_flags: set[str]) -> None:
    """Config-file values fill in anything the command line left unset."""
    if not args.config:
        return
    try:
        with open(args.config) as f:
            file_cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config file {args.config}: {exc}") from exc
    for key, value in file_cfg.items():
        dest = key.replace("-", "_")
        if dest not in parser_flags:
            raise CliError(f"unknown config key {key!r}")
        if getattr(args, dest, None) is None:
            setattr(args, dest, value)


def _cmd_sweep(args) -> int:
    started = time.time()
    flags = set(_SWEEP_DEFAULTS) | {"param", "values"}
    _apply_config_file(args, flags)
    for key, default in _SWEEP_DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, default)
    if args.param is None or args.values is None:
        raise CliError("--param and --values are required (flag or config)")

    if args.param == "alpha":
        if args.policy != "levy":
            raise CliError("--param alpha requires --policy levy")
        values = [float(v) for v in _parse_values(args.values)]
        base_policy = MobilityPolicy.levy_walk(values[0])
    else:
        if args.policy == "levy" and args.alpha is None:
            raise CliError("--policy levy requires --alpha")
        base_policy = _build_policy(args)
        values = [int(v) for v in _parse_values(args.values)]

    base = SimConfig(
        n=int(args.n), m=int(args.m), policy=base_policy,
        contact=ContactConfig(int(args.radius)),
        max_steps=args.max_steps, seed=int(args.seed),
    )
    result = run_sweep(
        base, args.param, values, int(args.reps),
        threads=args.threads,
        include_references=(args.param == "alpha"),
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs_csv = out_dir / "runs.csv"
    summary_csv = out_dir / "summary.csv"
    result.write_runs_csv(runs_csv)
    result.write_summary_csv(summary_csv)
    _write_manifest(
        out_dir / "manifest.json", "sweep", _config_dict(args),
        int(args.seed), [runs_csv, summary_csv], started,
    )
    bad = result.failed_points
    for p in bad:
        print(
            f"warning: point ({p.param}={p.value}) censored "
            f"{p.n_censored}/{len(p.runs)} runs",
            file=sys.stderr,
        )
    print(f"{len(result.points)} points -> {summary_csv}")
    return EXIT_STATISTICAL if bad else EXIT_OK


def _parse_values(spec: str | list) -> list:
    if isinstance(spec, list):
        return spec
    vals = [v.strip() for v in str(spec).split(",") if v.strip()]
    if not vals:
        raise CliError("--values must be a non-empty comma-separated list")
    return [float(v) for v in vals]


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

_SEGMENT_CASES = {
    "perpendicular": SegmentCase.PERPENDICULAR,
    "antiparallel": SegmentCase.ANTI_PARALLEL,
    "parallel": SegmentCase.PARALLEL,
}

_SEGMENT_EXPECTED = {
    SegmentCase.PERPENDICULAR: lambda ell, n: ell / (n * n),
    SegmentCase.ANTI_PARALLEL: lambda ell, n: 2 * ell / (n * n),
    SegmentCase.PARALLEL: lambda ell, n: 1 / (n * n),
}


def _claim_overlap(args) -> dict:
    n = args.n or 64
    trials = args.trials or 10_000
    rep = check_strong_overlap(n, trials, seed=args.seed)
    passed = rep.all_found and rep.gap_within_n and rep.fraction_ge_n_over_8 >= 0.45
    return {"claim": "overlap", **rep.to_dict(), "passed": passed}


def _claim_segment(args) -> dict:
    n = args.n or 8
    ell = args.ell or 3
    case = _SEGMENT_CASES[args.case or "perpendicular"]
    trials = args.trials if args.trials is not None else 0
    est = estimate_segment_connection(case, ell, n, trials=trials, seed=args.seed)
    expected = _SEGMENT_EXPECTED[case](ell, n)
    if est.exact:
        passed = est.estimate == expected
    else:
        passed = est.ci_low <= expected <= est.ci_high
    return {"claim": "segment", "expected": expected, **est.to_dict(),
            "passed": passed}


def _claim_pair(args) -> dict:
    n = args.n or 32
    trials = args.trials or 200_000
    est = estimate_pair_connection(n, trials, seed=args.seed)
    lo, hi = pair_connection_band(n)
    passed = lo <= est.estimate <= hi
    return {"claim": "pair", "band_low": lo, "band_high": hi,
            **est.to_dict(), "passed": passed}


def _claim_independence(args) -> dict:
    n = args.n or 16
    gap = args.gap if args.gap is not None else 2 * n
    trials = args.trials or 100_000
    rep = check_independence(n, gap, trials, seed=args.seed)
    return {"claim": "independence", **rep.to_dict()}


def _claim_lowerbound(args) -> dict:
    n = args.n or 64
    m = args.m or 16
    reps = args.reps or 400
    rep = check_lower_bound(n, m, reps, seed=args.seed)
    return {"claim": "lowerbound", **rep.to_dict()}


_CLAIMS = {
    "overlap": _claim_overlap,
    "segment": _claim_segment,
    "pair": _claim_pair,
    "independence": _claim_independence,
    "lowerbound": _claim_lowerbound,
}


def _cmd_oracle(args) -> int:
    started = time.time()
    names = list(_CLAIMS) if args.claim == "all" else [args.claim]
    claims = []
    for name in names:
        report = _CLAIMS[name](args)
        claims.append(report)
        print(f"{name}: {'PASS' if report['passed'] else 'FAIL'}")
    body = {"schema_version": SCHEMA_VERSION, "claims": claims}
    out = Path(args.out)
    _dump_json(body, out)
    _write_manifest(
        out.with_name(out.stem + ".manifest.json"), "oracle",
        _config_dict(args), args.seed, [out], started,
    )
    return EXIT_OK if all(c["passed"] for c in claims) else EXIT_STATISTICAL


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _cmd_fit(args) -> int:
    started = time.time()
    import csv as _csv

    try:
        with open(args.input, newline="") as f:
            rows = list(_csv.DictReader(f))
    except OSError as exc:
        raise CliError(f"cannot read {args.input}: {exc}") from exc
    points = []
    for row in rows:
        try:
            if row.get("mean"):
                points.append((float(row["value"]), float(row["mean"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(f"malformed sweep summary {args.input}: {exc}") from exc
    if len(points) < 4:
        raise CliError(
            f"need at least 4 fittable points in {args.input}, got {len(points)}"
        )
    kind = FormKind.AGENT_SWEEP if args.form == "agent" else FormKind.GRID_SWEEP
    try:
        res = fit_form(kind, points, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    body = {
        "schema_version": SCHEMA_VERSION,
        "points": [{"x": x, "y": y} for x, y in sorted(points)],
        **res.to_dict(),
    }
    out = Path(args.out)
    _dump_json(body, out)
    _write_manifest(
        out.with_name(out.stem + ".manifest.json"), "fit",
        _config_dict(args), args.seed, [out], started,
    )
    print(f"r_squared={res.r_squared:.6f} converged={res.converged} -> {out}")
    return EXIT_OK if res.converged else EXIT_STATISTICAL


# ---------------------------------------------------------------------------
# synth and replay
# ---------------------------------------------------------------------------


def _trace_runs(points_label, m_values, reps, seed, make_traces, radius_m):
    points = []
    for pidx, m in enumerate(m_values):
        runs = []
        for rep in range(reps):
            run_seed = derive_run_seed(seed, pidx, rep)
            traces = make_traces(m, run_seed)
            ft = flood_over_traces(traces, radius_m)
            runs.append(
                RunRecord(param=points_label, value=m, rep=rep,
                          seed=run_seed, flood_time=ft)
            )
        points.append(SweepPoint(param=points_label, value=m, runs=runs))
    return SweepResult(points=points, master_seed=seed)


def _cmd_synth(args) -> int:
    started = time.time()
    graph = load_road_graph(args.graph)
    stations = load_stations(args.stations, graph)
    model = None
    if args.policy == "data":
        if not args.trips:
            raise CliError("--policy data requires --trips")
        trips, report = load_trips(args.trips, [s.id for s in stations])
        if report.n_unknown:
            print(
                f"warning: dropped {report.n_unknown} trip rows naming "
                f"unknown stations: {', '.join(report.unknown_ids)}",
                file=sys.stderr,
            )
        model = build_transition_model(trips, [s.id for s in stations])
    m_values = [int(v) for v in _parse_values(args.m_values)]

    def make_traces(m, run_seed):
        traces = []
        for agent in range(m):
            stream = RawStream(
                np.random.PCG64(np.random.SeedSequence(run_seed, spawn_key=(agent,)))
            )
            traces.append(
                synth_trajectory(
                    stations, graph, args.policy, model,
                    speed_mps=args.speed, duration_s=args.duration,
                    stream=stream, agent_id=str(agent),
                    interval_s=args.interval,
                )
            )
        return traces

    result = _trace_runs("m", m_values, args.reps, args.seed,
                         make_traces, args.radius_m)
    return _emit_trace_sweep(result, args, "synth", started)


def _cmd_replay(args) -> int:
    started = time.time()
    traces, report = load_traces(args.traces)
    if report.n_dropped:
        print(
            f"warning: dropped {report.n_dropped} single-sample agents",
            file=sys.stderr,
        )
    if args.min_contacts > 0:
        traces = filter_by_contact_degree(traces, args.radius_m, args.min_contacts)
        if not traces:
            raise CliError("no traces left after the contact-degree filter")
    m_values = [int(v) for v in _parse_values(args.m_values)]
    for m in m_values:
        if m > len(traces):
            raise CliError(
                f"--m-values entry {m} exceeds the {len(traces)} usable traces"
            )
    points = []
    for pidx, m in enumerate(m_values):
        sub = replay_flood(traces, args.radius_m, m, args.reps,
                           seed=derive_run_seed(args.seed, pidx, 0))
        points.extend(sub.points)
    result = SweepResult(points=points, master_seed=args.seed)
    return _emit_trace_sweep(result, args, "replay", started)


def _emit_trace_sweep(result: SweepResult, args, command: str, started) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs_csv = out_dir / "runs.csv"
    summary_csv = out_dir / "summary.csv"
    result.write_runs_csv(runs_csv)
    result.write_summary_csv(summary_csv)
    _write_manifest(
        out_dir / "manifest.json", command, _config_dict(args),
        args.seed, [runs_csv, summary_csv], started,
    )
    bad = [p for p in result.points if p.all_censored]
    for p in bad:
        print(f"warning: all runs censored at {p.param}={p.value}",
              file=sys.stderr)
    print(f"{len(result.points)} points -> {summary_csv}")
    return EXIT_STATISTICAL if bad else EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def _cmd_bench(args) -> int:
    from .bench import run_benchmark

    report = run_benchmark(n=args.n, m=args.m, reps=args.reps, seed=args.seed)
    out = Path(args.out)
    _dump_json(report, out)
    for line in report["table"]:
        print(line)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _config_dict(args) -> dict:
    skip = {"func", "config"}
    return {
        k: v for k, v in sorted(vars(args).items())
        if k not in skip and not k.startswith("_")
    }


def _add_grid_flags(p, require_nm=True):
    p.add_argument("--n", type=int, required=require_nm, help="grid side")
    p.add_argument("--m", type=int, required=require_nm, help="agent count")
    p.add_argument("--policy", choices=sorted(_POLICIES), default="mrwp")
    p.add_argument("--alpha", type=float, default=None,
                   help="decay exponent (levy only)")
    p.add_argument("--radius", type=int, default=0,
                   help="transmission radius in grid units")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=None)


def build_parser() -> _Parser:
    top = _Parser(prog="floodsim", description=__doc__)
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("grid-sim", help="one seeded grid realization")
    _add_grid_flags(p)
    p.add_argument("--out", default="result.json")
    p.set_defaults(func=_cmd_grid_sim)

    p = sub.add_parser("sweep", help="mean flood time over a parameter sweep")
    p.add_argument("--param", choices=["m", "n", "alpha"], default=None)
    p.add_argument("--values", default=None,
                   help="comma-separated parameter values")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--policy", choices=sorted(_POLICIES), default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", default=None,
                   help="JSON config; command-line flags win")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("oracle", help="statistical claim checks")
    p.add_argument("--claim", choices=[*_CLAIMS, "all"], required=True)
    p.add_argument("--case", choices=sorted(_SEGMENT_CASES), default=None)
    p.add_argument("--ell", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--gap", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="oracle_report.json")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("fit", help="fit a sweep summary to a bound form")
    p.add_argument("--form", choices=["agent", "grid"], required=True)
    p.add_argument("--input", required=True, help="sweep summary CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="fit.json")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("synth", help="synthetic trajectories on a road graph")
    p.add_argument("--stations", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--trips", default=None)
    p.add_argument("--policy", choices=["rwp", "data"], required=True)
    p.add_argument("--m-values", required=True)
    p.add_argument("--reps", type=int, default=25)
    p.add_argument("--radius-m", type=float, default=100.0)
    p.add_argument("--speed", type=float, default=5.0,
                   help="agent speed in meters/second")
    p.add_argument("--duration", type=float, required=True,
                   help="trajectory span in seconds")
    p.add_argument("--interval", type=float, default=60.0,
                   help="sampling interval in seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="synth_out")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("replay", help="flood times over recorded GPS traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--radius-m", type=float, default=100.0)
    p.add_argument("--m-values", required=True)
    p.add_argument("--reps", type=int, default=25)
    p.add_argument("--min-contacts", type=int, default=0,
                   help="drop agents meeting fewer distinct partners")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="replay_out")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("bench", help="compare compiled and pure-Python engines")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bench.json")
    p.set_defaults(func=_cmd_bench)

    return top


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, IngestError) as exc:
        print(f"floodsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"floodsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
