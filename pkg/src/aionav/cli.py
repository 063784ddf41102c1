"""Command-line entry point: map generation, training, evaluation, replay.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .map_gen import (GenerationFailed, MAX_DIFFICULTY, ScenarioConfig,
                      SpawnFailed, generate_map, save_grid)
from .nets import CheckpointError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _write_manifest(out_dir: Path, command: str, flags: dict,
                    files: list[str]) -> None:
    doc = {"command": command, "version": __version__, "flags": flags,
           "files": files}
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_gen_maps(args) -> int:
    if not 0 <= args.difficulty <= MAX_DIFFICULTY:
        return _fail(f"difficulty must be in [0, {MAX_DIFFICULTY}]", EXIT_USAGE)
    if args.count < 1:
        return _fail("count must be >= 1", EXIT_USAGE)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    try:
        for i in range(args.count):
            config = ScenarioConfig(map_kind=args.kind,
                                    difficulty=args.difficulty,
                                    seed=args.seed + i)
            grid = generate_map(config)
            name = f"map_{args.kind}_d{args.difficulty}_{args.seed + i}.json"
            save_grid(grid, out / name)
            files.append(name)
    except GenerationFailed as e:
        return _fail(f"map generation failed: {e}", EXIT_DATA)
    _write_manifest(out, "gen-maps", {
        "kind": args.kind, "difficulty": args.difficulty,
        "count": args.count, "seed": args.seed}, files)
    return EXIT_OK


def _load_train_config(args):
    from .rl_training import TrainConfig
    path = Path(args.config)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    config = TrainConfig.from_json(path)
    if args.seed is not None:
        config.seed = args.seed
    if args.total_steps is not None:
        config.total_steps = args.total_steps
    return config


def _train_common(args, command: str) -> int:
    from .rl_training import NonFiniteGradient
    try:
        config = _load_train_config(args)
    except (FileNotFoundError, ValueError, json.JSONDecodeError) as e:
        return _fail(f"bad config: {e}", EXIT_USAGE)
    out = Path(args.out)
    if args.resume and not (out / "checkpoint.bin").exists():
        return _fail(f"nothing to resume in {out}", EXIT_USAGE)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if command == "train-drl":
            from .rl_training import train_reactive_policy
            train_reactive_policy(config, out_dir=out, resume=args.resume)
            flags = {"config": str(args.config), "seed": config.seed}
        else:
            from .local_planners import ReactivePolicy
            from .rl_training import train_switch_agent
            if args.reactive_checkpoint is None and not args.resume:
                return _fail("train-switch needs --reactive-checkpoint",
                             EXIT_USAGE)
            if args.reactive_checkpoint is not None:
                reactive = ReactivePolicy.from_checkpoint(
                    args.reactive_checkpoint)
            else:
                saved = out / "checkpoint.bin"
                reactive = ReactivePolicy.from_checkpoint(saved)
            train_switch_agent(config, reactive, out_dir=out,
                               resume=args.resume)
            flags = {"config": str(args.config), "seed": config.seed,
                     "reactive_checkpoint": str(args.reactive_checkpoint)}
    except CheckpointError as e:
        return _fail(str(e), EXIT_DATA)
    except NonFiniteGradient as e:
        return _fail(f"training aborted: {e}", EXIT_NUMERIC)
    _write_manifest(out, command, flags,
                    ["checkpoint.bin", "training_log.csv", "train_state.json"])
    return EXIT_OK


def cmd_eval(args) -> int:
    from .eval_harness import PlannerSpec, aggregate, export, run_battery
    try:
        spec = PlannerSpec(kind=args.planner, checkpoint=args.checkpoint)
    except ValueError as e:
        return _fail(str(e), EXIT_USAGE)
    if not 0 <= args.difficulty <= MAX_DIFFICULTY:
        return _fail(f"difficulty must be in [0, {MAX_DIFFICULTY}]", EXIT_USAGE)
    try:
        base = ScenarioConfig(map_kind=args.map_kind,
                              difficulty=args.difficulty,
                              n_obstacles=args.obstacles,
                              obstacle_speed=args.speed, seed=args.seed)
    except ValueError as e:
        return _fail(str(e), EXIT_USAGE)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        records = run_battery(spec, base, args.episodes, args.seed,
                              workers=args.workers)
    except CheckpointError as e:
        return _fail(str(e), EXIT_DATA)
    metrics = aggregate(records, planner=args.planner)
    export(records, [metrics], out)
    _write_manifest(out, "eval", {
        "planner": args.planner, "checkpoint": args.checkpoint,
        "map_kind": args.map_kind, "obstacles": args.obstacles,
        "difficulty": args.difficulty, "episodes": args.episodes,
        "seed": args.seed, "workers": args.workers},
        ["metrics.csv", "records.jsonl", "trajectories.svg"])
    print(f"success_rate={metrics.success_rate:.3f} "
          f"collisions_per_ep={metrics.collisions_per_ep:.3f} "
          f"path_length_m={metrics.path_length_m:.2f}")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .eval_harness import load_records
    from .render_svg import render_record
    try:
        records = load_records(args.record)
        if not records:
            raise ValueError("record file is empty")
        if not 0 <= args.index < len(records):
            raise ValueError(f"index {args.index} out of range "
                             f"({len(records)} records)")
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        return _fail(f"bad record file: {e}", EXIT_DATA)
    try:
        render_record(records[args.index], args.out)
    except (GenerationFailed, SpawnFailed) as e:
        return _fail(f"could not rebuild scenario: {e}", EXIT_DATA)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="aionav",
        description="Hierarchical 2D navigation with a learned planner switch")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-maps", help="generate occupancy-grid map files")
    g.add_argument("--kind", choices=["indoor", "outdoor"], required=True)
    g.add_argument("--difficulty", type=int, default=0)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_maps)

    for name, help_text in [
            ("train-drl", "train the reactive local policy"),
            ("train-switch", "train the planner-switch agent")]:
        t = sub.add_parser(name, help=help_text)
        t.add_argument("--config", required=True)
        t.add_argument("--out", required=True)
        t.add_argument("--resume", action="store_true")
        t.add_argument("--seed", type=int, default=None)
        t.add_argument("--total-steps", type=int, default=None)
        if name == "train-switch":
            t.add_argument("--reactive-checkpoint", default=None)
        t.set_defaults(func=lambda a, n=name: _train_common(a, n))

    e = sub.add_parser("eval", help="run a scenario battery")
    e.add_argument("--planner", choices=["aio", "teb", "dwa", "drl"],
                   required=True)
    e.add_argument("--checkpoint", default=None)
    e.add_argument("--map-kind", choices=["indoor", "outdoor"], required=True)
    e.add_argument("--obstacles", type=int, default=10)
    e.add_argument("--difficulty", type=int, default=2)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--speed", type=float, default=0.3)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="render one recorded episode as SVG")
    r.add_argument("--record", required=True)
    r.add_argument("--index", type=int, default=0)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
