"""Command-line entry point: ``stackrl bench run``, ``stackrl verify all``, ``stackrl episode``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from stackrl.agents import AgentConfig, run_episode
from stackrl.bench import BenchConfig, median_ratio, run_and_export
from stackrl.errors import StackRLError
from stackrl.envs import make_env

EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_IO = 2


def _floats(text, count=None):
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if count is not None and len(vals) != count:
        raise argparse.ArgumentTypeError(f"expected {count} numbers, got {len(vals)}")
    return vals


def _grid(text):
    parts = text.lower().split("x")
    if len(parts) != 2 or parts[0] != parts[1] or not parts[0].isdigit():
        raise argparse.ArgumentTypeError(f"grid must look like 5x5, got {text!r}")
    return int(parts[0])


def build_parser():
    parser = argparse.ArgumentParser(prog="stackrl", description="Stacked Q-learning agents and oracles.")
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="grid benchmark")
    bench_sub = bench.add_subparsers(dest="action", required=True)
    run = bench_sub.add_parser("run", help="run the grid and write CSV, JSON and SVG")
    run.add_argument("--config", type=Path, help="JSON config; missing fields take defaults")
    run.add_argument("--agents", help="comma-separated subset of mpc,rlq,rlqv,rlqc")
    run.add_argument("--grid", type=_grid, help="ticks per side, e.g. 5x5")
    run.add_argument("--horizon", type=int, help="prediction horizon N")
    run.add_argument("--dt", type=float, help="sampling time in seconds")
    run.add_argument("--gamma", type=float, help="discount rate")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int, help="parallel episode workers")
    run.add_argument("--carry-critics", action="store_true", help="reuse critic weights across starts")
    run.add_argument("--out", type=Path, required=True)

    verify = sub.add_parser("verify", help="theorem oracles")
    verify_sub = verify.add_subparsers(dest="action", required=True)
    vall = verify_sub.add_parser("all", help="run every oracle and write a JSON report")
    vall.add_argument("--seed", type=int, default=0)
    vall.add_argument("--out", type=Path, required=True)

    ep = sub.add_parser("episode", help="single closed-loop episode to CSV")
    ep.add_argument("--env", default="robot3w", choices=("robot3w", "lqr2d"))
    ep.add_argument("--agent", default="rlqv", choices=("mpc", "rlq", "rlqv", "rlqc"))
    ep.add_argument("--start", type=_floats, required=True, help="comma-separated start state")
    ep.add_argument("--horizon", type=int, default=12)
    ep.add_argument("--dt", type=float, default=0.1)
    ep.add_argument("--gamma", type=float, default=0.0)
    ep.add_argument("--out", type=Path, required=True)
    return parser


def _bench_config(args):
    cfg = BenchConfig.load(args.config) if args.config else BenchConfig()
    payload = cfg.to_dict()
    agent = dict(payload["agent"])
    if args.agents:
        payload["agents"] = [a.strip() for a in args.agents.split(",") if a.strip()]
    if args.grid is not None:
        payload["ticks"] = args.grid
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.workers is not None:
        payload["workers"] = args.workers
    if args.carry_critics:
        payload["carry_critics"] = True
    for key, value in (("horizon", args.horizon), ("delta", args.dt), ("gamma", args.gamma)):
        if value is not None:
            agent[key] = value
    payload["agent"] = agent
    return BenchConfig.from_dict(payload)


def cmd_bench_run(args):
    cfg = _bench_config(args)
    records = run_and_export(cfg, args.out)
    med = median_ratio(records)
    summary = f"{len(records)} starts written to {args.out}"
    if med is not None:
        summary += f"; median J_rlqv/J_mpc = {med:.1f}%"
    print(summary)


def cmd_verify_all(args):
    from stackrl.verify import run_all

    report = run_all(seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "verify_report.json"
    path.write_text(json.dumps(report, indent=2) + "\n")
    verdicts = [r["verdict"] for r in report["reports"]]
    print(f"{len(verdicts)} reports, {verdicts.count('violated')} violated, written to {path}")


def cmd_episode(args):
    env = make_env(args.env)
    x0 = np.asarray(args.start, dtype=float)
    cfg = AgentConfig(kind=args.agent, horizon=args.horizon, delta=args.dt, gamma=args.gamma)
    trace = run_episode(env, cfg, x0)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    trace.write_csv(args.out, env.state_names, env.action_names)
    print(f"{trace.reason} after {trace.steps} steps, J = {trace.J:.6g}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        ("bench", "run"): cmd_bench_run,
        ("verify", "all"): cmd_verify_all,
        ("episode", None): cmd_episode,
    }[(args.command, getattr(args, "action", None))]
    try:
        handler(args)
    except (StackRLError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
