#!/usr/bin/env python3
"""Delivery-probability sweeps over payload size and agent count.

Trains each method, then evaluates greedy delivery along both axes
(payload halved/doubled around the configured size, agent count
likewise). Results land in <out>/payload/ and <out>/n_agents/.

    python3 scripts/run_sweeps.py --out runs/sweeps --eval-episodes 400
"""
import argparse
import dataclasses
import sys
from pathlib import Path

from rifrl.config import PROFILES, load_run_config
from rifrl.experiment import sweep
from rifrl.federation import Method
from rifrl.metrics import write_sweep_csv, write_sweep_jsonl

METHODS = [m.value for m in Method]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON run config")
    ap.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    ap.add_argument("--episodes", type=int, help="override training length")
    ap.add_argument("--eval-episodes", type=int, default=None)
    ap.add_argument("--methods", default=",".join(METHODS))
    ap.add_argument("--workers", type=int, default=None,
                    help="sweep-cell threads (default RIFRL_THREADS or 1)")
    ap.add_argument("--out", default="runs/sweeps")
    args = ap.parse_args(argv)

    cfg = load_run_config(args.config) if args.config \
        else PROFILES[args.profile]()
    training = cfg.training
    if args.episodes is not None:
        training = dataclasses.replace(training, episodes=args.episodes)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    eval_episodes = args.eval_episodes or cfg.evaluation.episodes
    out = Path(args.out)

    payload = cfg.scenario.payload_bytes
    agents = cfg.scenario.n_v2v
    axes = {
        "payload": [payload / 2, payload, payload * 2],
        "n_agents": [max(1, agents // 2), agents, agents * 2],
    }
    for axis, values in axes.items():
        records, _ = sweep(cfg.scenario, training, axis, values, methods,
                           eval_episodes=eval_episodes,
                           eval_seed=cfg.evaluation.seed,
                           workers=args.workers,
                           progress=lambda msg: print(msg, flush=True))
        axis_dir = out / axis
        axis_dir.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(axis_dir / "sweep_metrics.csv", records)
        write_sweep_jsonl(axis_dir / "sweep_metrics.jsonl", records)
        print(f"{axis}: {len(records)} rows -> {axis_dir}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
