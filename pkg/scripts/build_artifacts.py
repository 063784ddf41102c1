#!/usr/bin/env python3
"""Build the trained checkpoints and cached evaluation batteries consumed by
the trend checks in tests/test_acceptance.py.

Stages (all idempotent; finished outputs are detected and skipped):

  reactive    train the reactive collision-avoidance policy (PPO, ~500k steps)
  switch      train the planner-switch agent for each seed, embedding the
              frozen reactive tensors in every checkpoint
  batteries   run the 100-episode paired-seed evaluation batteries and cache
              records.jsonl / metrics.csv per cell
  demo        one small battery with trajectories recorded, for the SVG
              contact sheet referenced by the README
  all         everything above, in dependency order

The full pipeline takes a few hours on one core.  Interrupted training
stages resume from their last checkpoint on the next invocation.
"""

import argparse
import json
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
ARTIFACTS = ROOT / "artifacts"

sys.path.insert(0, str(ROOT / "src"))

from aionav.eval_harness import (PlannerSpec, aggregate, export, metrics_csv,
                                 run_battery, save_records)
from aionav.local_planners import ReactivePolicy
from aionav.map_gen import ScenarioConfig
from aionav.rl_training import TrainConfig, train_reactive_policy, train_switch_agent

SWITCH_SEEDS = (0, 1, 2)
EPISODES = 100
BASE_SEED = 1000
DIFFICULTY = 2

REACTIVE_CONFIG = TrainConfig(
    total_steps=500_000,
    rollout_length=2048,
    minibatch_size=256,
    epochs=4,
    learning_rate=3e-4,
    map_kind="outdoor",
    n_obstacles=10,
    checkpoint_every=5,
    seed=0,
)

SWITCH_CONFIG = TrainConfig(
    total_steps=40_000,
    rollout_length=512,
    minibatch_size=128,
    epochs=4,
    learning_rate=3e-4,
    map_kind="outdoor",
    n_obstacles=10,
    checkpoint_every=5,
)

# One battery per (planner, map kind, obstacle count) cell; aio cells repeat
# per training seed.  Every battery shares BASE_SEED so the scenario faced in
# episode i is identical across planners.
BATTERY_CELLS = [
    ("teb_outdoor_n20", "teb", "outdoor", 20, None),
    ("drl_indoor_n20", "drl", "indoor", 20, None),
]
for _seed in SWITCH_SEEDS:
    for _kind in ("outdoor", "indoor"):
        for _n in (0, 5, 20):
            BATTERY_CELLS.append(
                (f"aio_s{_seed}_{_kind}_n{_n}", "aio", _kind, _n, _seed))


def log(msg: str) -> None:
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def _train_state(out_dir: Path) -> dict | None:
    state = out_dir / "train_state.json"
    if not state.exists() or not (out_dir / "checkpoint.bin").exists():
        return None
    with open(state) as f:
        return json.load(f)


def _run_training(label: str, config: TrainConfig, out_dir: Path, train_fn) -> None:
    state = _train_state(out_dir)
    if state is not None and state["steps"] >= config.total_steps:
        log(f"{label}: complete at {state['steps']} steps, skipping")
        return
    resume = state is not None
    mode = f"resuming from {state['steps']}" if resume else "starting fresh"
    log(f"{label}: {mode}, target {config.total_steps} steps")
    t0 = time.time()
    train_fn(config, out_dir, resume)
    log(f"{label}: done in {time.time() - t0:.0f}s")


def stage_reactive() -> None:
    _run_training(
        "reactive", REACTIVE_CONFIG, ARTIFACTS / "reactive",
        lambda cfg, out, res: train_reactive_policy(cfg, out_dir=out, resume=res))


def reactive_checkpoint() -> Path:
    path = ARTIFACTS / "reactive" / "checkpoint.bin"
    if not path.exists():
        raise SystemExit("reactive checkpoint missing; run --stage reactive first")
    return path


def stage_switch() -> None:
    reactive = ReactivePolicy.from_checkpoint(reactive_checkpoint())
    for seed in SWITCH_SEEDS:
        config = TrainConfig(**{**SWITCH_CONFIG.__dict__, "seed": seed})
        _run_training(
            f"switch seed {seed}", config, ARTIFACTS / f"switch_s{seed}",
            lambda cfg, out, res: train_switch_agent(cfg, reactive, out_dir=out,
                                                     resume=res))


def _battery_done(out_dir: Path, episodes: int) -> bool:
    path = out_dir / "records.jsonl"
    if not path.exists():
        return False
    with open(path) as f:
        return sum(1 for line in f if line.strip()) == episodes


def _checkpoint_for(planner: str, switch_seed: int | None) -> str | None:
    if planner == "aio":
        return str(ARTIFACTS / f"switch_s{switch_seed}" / "checkpoint.bin")
    if planner == "drl":
        return str(reactive_checkpoint())
    return None


def stage_batteries() -> None:
    for name, planner, kind, n_obstacles, switch_seed in BATTERY_CELLS:
        out_dir = ARTIFACTS / "batteries" / name
        if _battery_done(out_dir, EPISODES):
            log(f"battery {name}: cached, skipping")
            continue
        spec = PlannerSpec(kind=planner,
                           checkpoint=_checkpoint_for(planner, switch_seed))
        base = ScenarioConfig(map_kind=kind, difficulty=DIFFICULTY,
                              n_obstacles=n_obstacles, seed=BASE_SEED)
        log(f"battery {name}: running {EPISODES} episodes")
        t0 = time.time()
        records = run_battery(spec, base, EPISODES, BASE_SEED,
                              record_trajectories=False)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_records(records, out_dir / "records.jsonl")
        metrics = aggregate(records, planner=planner)
        (out_dir / "metrics.csv").write_text(metrics_csv([metrics]),
                                             encoding="utf-8")
        log(f"battery {name}: success={metrics.success_rate:.2f} "
            f"collisions={metrics.collisions_per_ep:.2f} "
            f"usage={ {k: round(v, 2) for k, v in metrics.usage.items()} } "
            f"({time.time() - t0:.0f}s)")


def stage_demo() -> None:
    out_dir = ARTIFACTS / "demo"
    if (out_dir / "trajectories.svg").exists():
        log("demo: cached, skipping")
        return
    spec = PlannerSpec(kind="aio", checkpoint=_checkpoint_for("aio", 0))
    base = ScenarioConfig(map_kind="outdoor", difficulty=DIFFICULTY,
                          n_obstacles=20, seed=BASE_SEED)
    log("demo: rendering 12 episodes with trajectories")
    records = run_battery(spec, base, 12, BASE_SEED, record_trajectories=True)
    export(records, [aggregate(records, planner="aio")], out_dir)
    log("demo: done")


STAGES = {
    "reactive": [stage_reactive],
    "switch": [stage_switch],
    "batteries": [stage_batteries],
    "demo": [stage_demo],
    "all": [stage_reactive, stage_switch, stage_batteries, stage_demo],
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--stage", choices=sorted(STAGES), default="all")
    args = parser.parse_args(argv)
    t0 = time.time()
    for fn in STAGES[args.stage]:
        fn()
    log(f"stage '{args.stage}' finished in {time.time() - t0:.0f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
