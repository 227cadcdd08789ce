"""Command line entry point.

    rifrl train --method rifrl --episodes 200 --seed 1 --out runs/demo
    rifrl evaluate --checkpoint runs/demo/rifrl/ep200.ckpt --episodes 200
    rifrl sweep --axis payload --values 1060,2120,4240 --out runs/sweep
    rifrl brio-check runs/demo/rifrl/ep200.ckpt
    rifrl gradcheck --nets 20

Every subcommand takes --config FILE (JSON; see config.py) or
--profile desk|full; explicit flags override file values.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import brio
from .checkpoint import export_json, load_checkpoint, save_checkpoint
from .config import (PROFILES, RunConfig, config_digest, load_run_config,
                     save_run_config)
from .env import ConfigError
from .experiment import evaluate_delivery, sweep
from .federation import Method, NanDivergenceError, run_training
from .gradcheck import run_gradcheck
from .metrics import (EvalRecord, write_sweep_csv, write_sweep_jsonl,
                      write_training_csv, write_training_jsonl)
from .policy import raw_outputs


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config file")
    p.add_argument("--profile", choices=sorted(PROFILES),
                   default="desk", help="named base config")


def _load_config(args) -> RunConfig:
    if args.config:
        return load_run_config(args.config)
    return PROFILES[args.profile]()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rifrl",
        description="Federated policy-gradient training for V2X "
                    "spectrum and power allocation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one method, write metrics "
                                     "and checkpoints")
    _add_config_args(p)
    p.add_argument("--method", help="rifrl | frl | independent_pg | random")
    p.add_argument("--episodes", type=int, help="last episode index J")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory "
                                 "(default runs/<method>-seed<seed>)")
    p.add_argument("--checkpoint-interval", type=int, dest="ckpt_interval")

    p = sub.add_parser("evaluate", help="greedy delivery-probability "
                                        "evaluation")
    _add_config_args(p)
    p.add_argument("--checkpoint", help="model checkpoint; omit for "
                                        "uniform random actions")
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--payload", type=float, help="override payload bytes")
    p.add_argument("--out", help="append-style CSV path for the result row")

    p = sub.add_parser("sweep", help="train and evaluate along one axis")
    _add_config_args(p)
    p.add_argument("--axis", choices=("payload", "n_agents"), required=True)
    p.add_argument("--values", required=True,
                   help="comma-separated axis values")
    p.add_argument("--methods", default="rifrl,frl,independent_pg,random")
    p.add_argument("--episodes", type=int, help="training episodes per cell")
    p.add_argument("--eval-episodes", type=int, dest="eval_episodes")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int,
                   help="sweep-cell threads (default: RIFRL_THREADS or 1)")

    p = sub.add_parser("brio-check", help="verify the rescale on a "
                                          "checkpointed model")
    p.add_argument("checkpoint")
    p.add_argument("--inputs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true",
                   help="also print the checkpoint as JSON")

    p = sub.add_parser("gradcheck", help="finite-difference check of the "
                                         "policy gradients")
    p.add_argument("--nets", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)

    return parser


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    method = Method.parse(args.method or cfg.method)
    training = cfg.training
    if args.episodes is not None:
        training = replace(training, episodes=args.episodes)
    if args.seed is not None:
        training = replace(training, seed=args.seed)
    if args.ckpt_interval is not None:
        training = replace(training, checkpoint_interval=args.ckpt_interval)
    cfg = replace(cfg, training=training, method=method.value)

    out = Path(args.out or f"runs/{method.value}-seed{training.seed}")
    out.mkdir(parents=True, exist_ok=True)
    save_run_config(out / "config.json", cfg)
    result = run_training(cfg.scenario, training, method,
                          checkpoint_dir=out / method.value,
                          config_digest=config_digest(cfg))
    write_training_csv(out / "train_metrics.csv", result.metrics.episodes)
    write_training_jsonl(out / "train_metrics.jsonl", result.metrics.episodes)
    last = result.metrics.episodes[-1]
    print(f"{method.value}: {training.episodes + 1} episodes, "
          f"final moving-average return {last.moving_avg:.3f}, "
          f"{result.uploads} model uploads, metrics in {out}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    scenario = cfg.scenario
    if args.payload is not None:
        scenario = replace(scenario, payload_bytes=args.payload)
    episodes = args.episodes or cfg.evaluation.episodes
    seed = args.seed if args.seed is not None else cfg.evaluation.seed
    if args.checkpoint:
        params, _ = load_checkpoint(args.checkpoint,
                                    expected_digest=config_digest(cfg))
        models = params
        label = Path(args.checkpoint).stem
    else:
        models = None
        label = "random"
    res = evaluate_delivery(models, scenario, episodes, seed)
    print(f"delivery probability {res.probability:.4f} "
          f"+- {res.ci_half_width:.4f} "
          f"({res.delivered}/{res.total_links} links, {episodes} episodes)")
    if args.out:
        rec = EvalRecord(label, seed, "payload",
                         float(scenario.payload_bytes), res.probability,
                         res.ci_half_width, episodes)
        write_sweep_csv(args.out, [rec])
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    training = cfg.training
    if args.episodes is not None:
        training = replace(training, episodes=args.episodes)
    if args.seed is not None:
        training = replace(training, seed=args.seed)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    eval_episodes = args.eval_episodes or cfg.evaluation.episodes
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records, _ = sweep(cfg.scenario, training, args.axis, values, methods,
                       eval_episodes=eval_episodes,
                       eval_seed=cfg.evaluation.seed, workers=args.workers,
                       progress=lambda msg: print(msg, file=sys.stderr))
    write_sweep_csv(out / "sweep_metrics.csv", records)
    write_sweep_jsonl(out / "sweep_metrics.jsonl", records)
    print(f"{len(records)} sweep rows written to {out}")
    return 0


def _cmd_brio_check(args) -> int:
    params, episode = load_checkpoint(args.checkpoint)
    if args.json:
        print(export_json(args.checkpoint))
    rng = np.random.default_rng(args.seed)
    x = rng.normal(size=(args.inputs, params.layer_sizes[0]))
    rescaled = brio.rescale(params)
    y0 = raw_outputs(params, x)
    y1 = raw_outputs(rescaled, x)
    equiv = float(np.max(np.abs(y0 - y1) / (1.0 + np.abs(y0))))
    scales = brio.compute_scales(rescaled).scales
    unit_err = max(float(np.abs(s - 1.0).max()) for s in scales[1:-1]) \
        if len(scales) > 2 else 0.0
    twice = brio.rescale(rescaled)
    idem = max(float(np.abs(a - b).max())
               for a, b in zip(twice.weights, rescaled.weights))
    ok = equiv <= 1e-6 and unit_err <= 1e-9 and idem <= 1e-12
    status = "PASS" if ok else "FAIL"
    print(f"{status} rescale check on ep{episode}: "
          f"max output discrepancy {equiv:.2e}, "
          f"unit-column error {unit_err:.2e}, "
          f"idempotence error {idem:.2e}")
    return 0 if ok else 1


def _cmd_gradcheck(args) -> int:
    report = run_gradcheck(nets=args.nets, seed=args.seed)
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} gradient check on {report.nets} nets: "
          f"worst error ratio {report.max_error_ratio:.3f} (<= 1 passes), "
          f"score identity residual {report.max_score_residual:.2e}")
    return 0 if report.passed else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "evaluate": _cmd_evaluate,
        "sweep": _cmd_sweep,
        "brio-check": _cmd_brio_check,
        "gradcheck": _cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, NanDivergenceError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
