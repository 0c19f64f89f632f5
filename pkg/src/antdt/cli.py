"""Command-line harness: run scenarios, sweep them, solve allocations, serve the shard ledger."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import presets
from .core import ConfigError, ScenarioConfig, apply_overrides, load_config, validate_config
from .dds import DdsService
from .service import FrameServer
from .sim import run
from .solver import BatchProblem, DeviceClassSpec, GradAccumProblem, Infeasible, solve_batch, solve_grad_accum

EXIT_OK, EXIT_INVALID, EXIT_ABORTED = 0, 2, 3


def _load(args) -> ScenarioConfig:
    if args.preset and args.config:
        raise ConfigError("give either --preset or --config")
    if args.preset:
        try:
            cfg = presets.get(args.preset)
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
    elif args.config:
        try:
            cfg = load_config(args.config)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from None
    else:
        raise ConfigError("need --preset or --config")
    env_seed = os.environ.get("ANTDT_SEED")
    if env_seed is not None:
        try:
            cfg = cfg.with_(seed=int(env_seed))
        except ValueError:
            raise ConfigError(f"ANTDT_SEED must be an integer, got {env_seed!r}") from None
    return apply_overrides(cfg, args.set or [])


def _invalid(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_INVALID


# -- run --------------------------------------------------------------------


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
    except ConfigError as exc:
        return _invalid(str(exc))
    problems = validate_config(cfg)
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return EXIT_INVALID
    trace = args.emit == "fig-trace"
    metrics, log = run(cfg, trace=trace)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(cfg.dumps() + "\n", encoding="utf-8")
        (out / "summary.json").write_text(metrics.summary_json() + "\n", encoding="utf-8")
        log.write(out / "events.jsonl")
        if trace:
            (out / "iterations.csv").write_text(metrics.trace_csv(), encoding="utf-8", newline="")
    print(json.dumps({"jct": round(metrics.jct, 6), "aborted": metrics.aborted, "iterations": metrics.iterations}))
    return EXIT_ABORTED if metrics.aborted else EXIT_OK


# -- sweep ------------------------------------------------------------------


def _sweep_job(job: tuple[str, str, str, ScenarioConfig]) -> tuple[str, str, str, float, float, bool]:
    axis, value, policy, cfg = job
    m, _ = run(cfg)
    return axis, value, policy, m.jct, m.failover_delay, m.aborted


def sweep_rows(cfg: ScenarioConfig, axis: str, values: list[str], policies: list[str], repeat: int = 3, jobs: int | None = None) -> list[dict]:
    """One row per (axis value, policy): JCT mean and population stddev over ``repeat`` seeds."""
    grid: list[tuple[str, str, ScenarioConfig]] = []
    if axis == "failover":
        for label, variant in presets.failover_variants(cfg):
            grid.append((label, str(cfg.policy), variant))
    else:
        for value in values:
            for pol in policies or [str(cfg.policy)]:
                base = presets.with_policy(cfg, pol)
                if axis == "intensity":
                    variant = presets.with_intensity(base, float(value))
                else:
                    variant = apply_overrides(base, [f"{axis}={value}"])
                grid.append((value, str(variant.policy), variant))
    work = []
    for value, pol, variant in grid:
        problems = validate_config(variant)
        if problems:
            raise ConfigError(f"{axis}={value}, {pol}: {problems[0]}")
        for r in range(repeat):
            work.append((axis, value, pol, variant.with_(seed=variant.seed + r)))
    workers = jobs or os.cpu_count() or 1
    if workers > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, work))
    else:
        results = [_sweep_job(j) for j in work]
    rows = []
    for value, pol, _ in grid:
        jcts = [r[3] for r in results if r[1] == value and r[2] == pol]
        delays = [r[4] for r in results if r[1] == value and r[2] == pol]
        rows.append({
            "axis": axis,
            "value": value,
            "policy": pol,
            "jct_mean": statistics.fmean(jcts),
            "jct_std": statistics.pstdev(jcts),
            "failover_delay_mean": statistics.fmean(delays),
            "repeats": len(jcts),
            "aborted": sum(r[5] for r in results if r[1] == value and r[2] == pol),
        })
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = ["axis", "value", "policy", "jct_mean", "jct_std", "failover_delay_mean", "repeats", "aborted"]
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([f"{r[c]:.6f}" if isinstance(r[c], float) else r[c] for c in cols])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    try:
        cfg = _load(args)
        axis, _, raw = args.axis.partition("=")
        values = [v for v in raw.split(",") if v] if raw else []
        if axis != "failover" and not values:
            raise ConfigError("--axis needs values, e.g. intensity=0.1,0.3")
        policies = [p for p in (args.policies or "").split(",") if p]
        rows = sweep_rows(cfg, axis, values, policies, args.repeat, args.jobs)
    except (ConfigError, ValueError) as exc:
        return _invalid(str(exc))
    text = rows_to_csv(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- misc -------------------------------------------------------------------


def cmd_presets(args) -> int:
    width = max(len(n) for n in presets.PRESETS)
    for name, p in presets.PRESETS.items():
        print(f"{name:<{width}}  {p.description}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = _load(args)
    except ConfigError as exc:
        return _invalid(str(exc))
    problems = validate_config(cfg)
    for p in problems:
        print(f"invalid: {p}")
    if not problems:
        print("ok")
    return EXIT_INVALID if problems else EXIT_OK


def _parse_class(text: str) -> DeviceClassSpec:
    try:
        count, speed, lo, hi = text.split(":")
        return DeviceClassSpec(int(count), float(speed), int(lo), int(hi))
    except ValueError:
        raise argparse.ArgumentTypeError(f"class must be count:speed:b_min:b_max, got {text!r}") from None


def cmd_solve(args) -> int:
    try:
        if args.problem == "batch":
            speeds = [float(x) for x in args.speeds.split(",")]
            sol = solve_batch(BatchProblem(args.B, speeds))
        else:
            sol = solve_grad_accum(GradAccumProblem(args.B, args.cls, args.c_min, args.c_max))
    except Infeasible as exc:
        print(json.dumps({"infeasible": str(exc), "nearest_below": exc.below, "nearest_above": exc.above}))
        return EXIT_INVALID
    except ValueError as exc:
        return _invalid(str(exc))
    out = {"objective": sol.objective_z, "allocation": [list(e) for e in sol.allocation.per_worker]}
    if sol.per_class:
        out["per_class"] = [{"batch": b, "accum": c} for b, c in sol.per_class]
    print(json.dumps(out))
    return EXIT_OK


def cmd_dds_serve(args) -> int:
    svc = DdsService(args.samples, args.batch, args.batches_per_shard, args.seed, args.epochs)
    server = FrameServer(svc.handle, args.host, args.port)
    host, port = server.address
    print(f"shard ledger listening on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="antdt", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("--preset", help="named preset (see `presets`)")
        p.add_argument("--config", help="scenario JSON file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted-path override, repeatable")

    p = sub.add_parser("run", help="simulate one scenario")
    scenario_args(p)
    p.add_argument("--out", help="directory for summary.json, events.jsonl and CSVs")
    p.add_argument("--emit", choices=["fig-trace"], help="also write the per-iteration BPT / batch-size CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid of runs, one CSV row per (value, policy)")
    scenario_args(p)
    p.add_argument("--axis", default="intensity=0.1,0.3,0.5,0.8",
                   help="intensity=..., any dotted config path=..., or 'failover'")
    p.add_argument("--policies", help="comma-separated policies, e.g. NativeBSP,AntDtNd")
    p.add_argument("--repeat", type=int, default=3, help="seeds per cell (default 3)")
    p.add_argument("--jobs", type=int, help="parallel runs (default: CPU count)")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("presets", help="list presets")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("validate", help="check a scenario without running it")
    scenario_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve one batch-allocation problem")
    p.add_argument("problem", choices=["batch", "accum"])
    p.add_argument("--B", type=int, required=True, help="global batch")
    p.add_argument("--speeds", help="batch: comma-separated worker speeds")
    p.add_argument("--class", dest="cls", action="append", type=_parse_class, default=[],
                   help="accum: count:speed:b_min:b_max, repeatable")
    p.add_argument("--c-min", type=int, default=1)
    p.add_argument("--c-max", type=int, default=1)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("dds-serve", help="serve a shard ledger over TCP")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--batch", type=int, required=True)
    p.add_argument("--batches-per-shard", type=int, default=100)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=cmd_dds_serve)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve" and args.problem == "batch" and not args.speeds:
        return _invalid("solve batch needs --speeds")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
