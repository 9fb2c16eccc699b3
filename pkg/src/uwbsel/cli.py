"""Command-line entry point.

Exit codes: 0 success, 1 validation error (bad config, arguments or
checkpoint), 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .channel import TdoaMeasurement, localize_pair, true_tdoa
from .config import POLICIES, ExperimentConfig, load_config
from .energy import format_energy_table
from .env import Action
from .errors import ValidationError
from . import runner

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

EVAL_FIELDS = ("episode", "steps", "c1", "c2", "c3", "c4", "final_md", "mean_location_error", "nlos_links")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; usage errors are validation errors here.
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="TOML experiment config (defaults when omitted)")
    p.add_argument("--output-dir", help="output directory (the env var UWBSEL_OUTPUT_DIR wins)")
    p.add_argument("--full-scale", action="store_true", help="use 128-filter conv layers")


def _resolve(args, policy: Optional[str] = None) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    if args.full_scale:
        cfg = replace(cfg, full_scale=True)
    if policy:
        cfg = cfg.with_policy(policy)
    epochs = getattr(args, "epochs", None)
    if epochs is not None:
        cfg = replace(cfg, schedule=replace(cfg.schedule, n_epoch=epochs))
    return cfg


def cmd_train(args) -> int:
    cfg = _resolve(args, args.policy)
    out = cfg.resolved_output_dir()
    result = runner.run_experiment(cfg)
    last = result.records[-1] if result.records else None
    msg = f"{cfg.policy}: {len(result.records)} epochs -> {out}"
    if last:
        msg += f" (last epoch C1={last.c1} C4={last.c4} MD={last.final_md:.3g})"
    print(msg)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _resolve(args, args.policy)
    world = cfg.build_world()
    policy = runner.load_policy(cfg, args.checkpoint, world)
    metrics = runner.evaluate_policy(cfg, policy, world, args.eval_epochs)
    rows = [
        {"episode": k, "steps": m.steps, "c1": m.counts[1], "c2": m.counts[2], "c3": m.counts[3],
         "c4": m.counts[4], "final_md": m.final_md, "mean_location_error": m.mean_location_error,
         "nlos_links": m.nlos_links}
        for k, m in enumerate(metrics)
    ]
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "evaluation.csv").write_text(runner.rows_to_csv(rows, EVAL_FIELDS))
    runner.write_manifest(cfg, out, {"checkpoint": str(args.checkpoint) if args.checkpoint else None})
    summary = runner.PolicySummary(cfg.policy, metrics).row()
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_compare(args) -> int:
    base = _resolve(args)
    names = [p.strip() for p in args.policies.split(",") if p.strip()]
    for n in names:
        if n not in POLICIES:
            raise ValidationError(f"unknown policy {n!r}; choose from {POLICIES}")
    out = base.resolved_output_dir()
    cfgs = [base.with_policy(n) for n in names]
    train_dirs = [out / f"train-{n}" if n in ("dqlel", "ne-drl") else None for n in names]
    summaries = runner.compare_policies(cfgs, out / "comparison.csv", train_dirs)
    runner.write_manifest(base, out, {"policies": names})
    for s in summaries:
        print(json.dumps(s.row(), sort_keys=True))
    return EXIT_OK


def cmd_trajectory(args) -> int:
    cfg = _resolve(args, args.policy)
    rows = runner.trajectory_replay(cfg, args.checkpoint, args.steps)
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_text(runner.rows_to_csv(rows, runner.TRAJECTORY_FIELDS))
    runner.write_manifest(cfg, out, {"checkpoint": str(args.checkpoint) if args.checkpoint else None})
    print(f"{len(rows)} steps -> {out / 'trajectory.csv'}")
    return EXIT_OK


def cmd_env_dump(args) -> int:
    cfg = _resolve(args)
    world = cfg.build_world()
    print(json.dumps({"e_total_uj": cfg.e_total, "world": world.to_dict()}, indent=2))
    return EXIT_OK


def cmd_show_energy(args) -> int:
    cfg = _resolve(args)
    print(format_energy_table(cfg.energy))
    return EXIT_OK


def cmd_localize(args) -> int:
    cfg = _resolve(args)
    world = cfg.build_world()
    i, j = args.pair
    if not (0 <= i < world.n_u and 0 <= j < world.n_u) or i == j:
        raise ValidationError(f"pair must name two distinct beacons in [0, {world.n_u})")
    b_i, b_j = world.beacons[i], world.beacons[j]
    c = cfg.measurement.c
    if args.tdoa is not None:
        t_ij = args.tdoa
    elif args.user is not None:
        t_ij = true_tdoa(args.user, b_i, b_j, c)
    else:
        raise ValidationError("give --tdoa or --user")
    meas = TdoaMeasurement((i, j), t_ij, (1, 1))
    est = localize_pair(meas, b_i, b_j, world.centers, prev_estimate=args.prev, c=c)
    print(json.dumps({"pair": [i, j], "t_ij": t_ij, "estimate": list(est)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uwbsel", description="UWB beacon-pair selection with deep Q-learning")
    p.add_argument("--version", action="version", version=f"uwbsel {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("train", help="train or run a policy, streaming per-epoch CSVs")
    _common(s)
    s.add_argument("--policy", choices=POLICIES)
    s.add_argument("--epochs", type=int, help="override schedule.n_epoch")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="greedy evaluation of a checkpoint or baseline")
    _common(s)
    s.add_argument("--policy", choices=POLICIES)
    s.add_argument("--checkpoint", help="checkpoint.json from a train run")
    s.add_argument("--eval-epochs", type=int, help="override evaluation.epochs")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("compare", help="paired comparison of policies")
    _common(s)
    s.add_argument("--policies", default=",".join(POLICIES), help="comma-separated policy list")
    s.add_argument("--epochs", type=int, help="override schedule.n_epoch for learners")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("trajectory", help="greedy rollout of truth vs estimate")
    _common(s)
    s.add_argument("--policy", choices=POLICIES)
    s.add_argument("--checkpoint")
    s.add_argument("--steps", type=int, default=50)
    s.set_defaults(func=cmd_trajectory)

    s = sub.add_parser("env-dump", help="print the generated world as JSON")
    _common(s)
    s.set_defaults(func=cmd_env_dump)

    s = sub.add_parser("show-energy", help="print the per-packet energy breakdown")
    _common(s)
    s.set_defaults(func=cmd_show_energy)

    s = sub.add_parser("localize", help="grid TDoA fix for one beacon pair")
    _common(s)
    s.add_argument("--pair", type=int, nargs=2, required=True, metavar=("I", "J"))
    g = s.add_mutually_exclusive_group()
    g.add_argument("--tdoa", type=float, help="measured t_i - t_j in seconds")
    g.add_argument("--user", type=float, nargs=2, metavar=("X", "Y"), help="noiseless TDoA from this position")
    s.add_argument("--prev", type=float, nargs=2, metavar=("X", "Y"), help="previous estimate for tie-breaks")
    s.set_defaults(func=cmd_localize)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"uwbsel: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        print(f"uwbsel: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
