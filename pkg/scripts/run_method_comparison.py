#!/usr/bin/env python3
"""Train every method over several seeds and rank final returns.

Writes per-run training metrics under --out and a summary.csv with one
row per (method, seed) holding the mean moving-average return over the
final 10% of episodes.

    python3 scripts/run_method_comparison.py --seeds 5 --out runs/comparison
"""
import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from rifrl.config import PROFILES, load_run_config
from rifrl.federation import Method, run_training
from rifrl.metrics import write_training_csv, write_training_jsonl

METHODS = [m.value for m in Method]


def final_window_score(episodes) -> float:
    tail = max(1, len(episodes) // 10)
    return float(np.mean([e.moving_avg for e in episodes[-tail:]]))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON run config")
    ap.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--episodes", type=int, help="override training length")
    ap.add_argument("--methods", default=",".join(METHODS))
    ap.add_argument("--out", default="runs/comparison")
    args = ap.parse_args(argv)

    cfg = load_run_config(args.config) if args.config \
        else PROFILES[args.profile]()
    training = cfg.training
    if args.episodes is not None:
        training = dataclasses.replace(training, episodes=args.episodes)
    methods = [Method.parse(m) for m in args.methods.split(",") if m.strip()]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    scores: dict[str, list[float]] = {m.value: [] for m in methods}
    for seed in range(args.seeds):
        for method in methods:
            t0 = time.time()
            settings = dataclasses.replace(training, seed=seed)
            result = run_training(cfg.scenario, settings, method)
            run_dir = out / f"{method.value}-seed{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            write_training_csv(run_dir / "train_metrics.csv",
                               result.metrics.episodes)
            write_training_jsonl(run_dir / "train_metrics.jsonl",
                                 result.metrics.episodes)
            score = final_window_score(result.metrics.episodes)
            scores[method.value].append(score)
            print(f"seed {seed} {method.value:15s} final {score:8.2f} "
                  f"({time.time() - t0:5.1f}s)", flush=True)

    lines = ["method,seed,final_return"]
    for m in methods:
        for seed, s in enumerate(scores[m.value]):
            lines.append(f"{m.value},{seed},{s!r}")
    (out / "summary.csv").write_text("\n".join(lines) + "\n")

    print()
    ranked = sorted(methods, key=lambda m: -np.mean(scores[m.value]))
    for m in ranked:
        vals = scores[m.value]
        print(f"{m.value:15s} mean {np.mean(vals):8.2f} "
              f"std {np.std(vals):6.2f} over {len(vals)} seeds")
    return 0


if __name__ == "__main__":
    sys.exit(main())
