"""Benchmark batteries over paired scenario seeds, metric aggregation, and
CSV / JSON-lines / SVG exports."""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .local_planners import (DrlPlanner, DwaPlanner, PlannerRegistry,
                             ReactivePolicy, TebPlanner)
from .map_gen import ScenarioConfig
from .nav_env import NavEpisode, build_episode
from .sim_core import EpisodeOutcome, LOCALS_PER_SWITCH, Pose2D
from .switch_agent import SelectMode, SwitchPolicy

PLANNER_KINDS = ("aio", "teb", "dwa", "drl")


class EmptyInput(Exception):
    pass


@dataclass
class PlannerSpec:
    kind: str
    checkpoint: str | None = None

    def __post_init__(self):
        if self.kind not in PLANNER_KINDS:
            raise ValueError(f"unknown planner kind {self.kind!r}")
        if self.kind in ("aio", "drl") and self.checkpoint is None:
            raise ValueError(f"{self.kind} requires a checkpoint")
        if self.kind in ("teb", "dwa") and self.checkpoint is not None:
            raise ValueError(f"{self.kind} takes no checkpoint")


@dataclass
class EpisodeRecord:
    scenario: ScenarioConfig
    outcome: EpisodeOutcome
    path_length: float
    duration: float
    collisions: int
    near_misses: int
    planners: list[str]
    planner_usage: dict[str, float]
    planner_calls: dict[str, int]
    planner_total_ms: dict[str, float]
    trajectory: list = field(default_factory=list)
    error: str | None = None

    @property
    def success(self) -> bool:
        return self.outcome is EpisodeOutcome.GoalReached

    @property
    def mean_compute_ms(self) -> dict[str, float]:
        return {name: (self.planner_total_ms[name] / self.planner_calls[name]
                       if self.planner_calls.get(name) else 0.0)
                for name in self.planners}


@dataclass
class Metrics:
    planner: str
    map_kind: str
    n_obstacles: int
    episodes: int
    success_rate: float
    collisions_per_ep: float
    path_length_m: float
    compute_ms: float
    usage: dict[str, float]


def _make_controller(spec: PlannerSpec):
    """Load checkpoints once; returns a factory building a fresh registry
    (clean timing counters) and the optional switch policy per episode."""
    if spec.kind == "aio":
        reactive = ReactivePolicy.from_checkpoint(spec.checkpoint)
        switch = SwitchPolicy.from_checkpoint(spec.checkpoint)
        return (lambda: PlannerRegistry([TebPlanner(), DrlPlanner(reactive)]),
                switch)
    if spec.kind == "drl":
        reactive = ReactivePolicy.from_checkpoint(spec.checkpoint)
        return (lambda: PlannerRegistry([DrlPlanner(reactive)])), None
    if spec.kind == "teb":
        return (lambda: PlannerRegistry([TebPlanner()])), None
    return (lambda: PlannerRegistry([DwaPlanner()])), None


def run_episode(config: ScenarioConfig, registry: PlannerRegistry,
                switch: SwitchPolicy | None,
                record_trajectory: bool = True) -> EpisodeRecord:
    """One evaluation episode, greedy decisions, commands at 10 Hz."""
    names = [p.name for p in registry.planners]
    usage = [0] * len(registry)
    near = 0
    path_len = 0.0
    error = None
    outcome = EpisodeOutcome.MaxIterations
    duration = 0.0
    trajectory = []
    try:
        episode = NavEpisode(build_episode(config), safety_from="dynamic",
                             record=record_trajectory)
        prev = episode.world.robot.copy()
        active = 0
        step_i = 0
        while not episode.done:
            if switch is not None and step_i % LOCALS_PER_SWITCH == 0:
                decision = switch.decide(episode.observation(),
                                         SelectMode.Greedy)
                active = decision.planner
            cmd = registry.trigger_by_id(active, episode.planner_input())
            breakdown = episode.local_step(cmd, planner_id=active)
            if breakdown.safe_dist < 0:
                near += 1
            usage[active] += 1
            path_len += prev.distance_to(episode.world.robot)
            prev = episode.world.robot.copy()
            step_i += 1
        outcome = episode.outcome
        duration = episode.world.sim_time
        if record_trajectory:
            trajectory = episode.trajectory
    except Exception as e:  # a planner/environment failure is a failed run
        error = f"{type(e).__name__}: {e}"
    total = max(sum(usage), 1)
    return EpisodeRecord(
        scenario=config,
        outcome=outcome,
        path_length=path_len,
        duration=duration,
        collisions=1 if outcome is EpisodeOutcome.Collision else 0,
        near_misses=near,
        planners=names,
        planner_usage={n: usage[i] / total for i, n in enumerate(names)},
        planner_calls={n: usage[i] for i, n in enumerate(names)},
        planner_total_ms={n: registry.total_ms[i] for i, n in enumerate(names)},
        trajectory=trajectory,
        error=error,
    )


def _battery_configs(base: ScenarioConfig, episodes: int,
                     seed: int) -> list[ScenarioConfig]:
    return [dataclasses.replace(base, seed=seed + i) for i in range(episodes)]


def _episode_worker(args) -> EpisodeRecord:
    spec, config, record_trajectory = args
    make_registry, switch = _make_controller(spec)
    return run_episode(config, make_registry(), switch, record_trajectory)


def run_battery(spec: PlannerSpec, base: ScenarioConfig, episodes: int,
                seed: int, record_trajectories: bool = True,
                workers: int = 1) -> list[EpisodeRecord]:
    """Paired battery: episode i always uses scenario seed = seed + i, so
    every planner faces the identical scenario sequence."""
    configs = _battery_configs(base, episodes, seed)
    if workers > 1:
        jobs = [(spec, c, record_trajectories) for c in configs]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_episode_worker, jobs))
    make_registry, switch = _make_controller(spec)
    return [run_episode(c, make_registry(), switch, record_trajectories)
            for c in configs]


def aggregate(records: list[EpisodeRecord], planner: str) -> Metrics:
    if not records:
        raise EmptyInput("no records to aggregate")
    scen = records[0].scenario
    for r in records:
        if (r.scenario.map_kind, r.scenario.n_obstacles) != \
                (scen.map_kind, scen.n_obstacles):
            raise ValueError("records span multiple scenario classes")
    total_calls: dict[str, int] = {}
    total_ms = 0.0
    n_calls = 0
    for r in records:
        for name in r.planners:
            total_calls[name] = total_calls.get(name, 0) + r.planner_calls[name]
            total_ms += r.planner_total_ms[name]
            n_calls += r.planner_calls[name]
    grand = max(sum(total_calls.values()), 1)
    return Metrics(
        planner=planner,
        map_kind=scen.map_kind,
        n_obstacles=scen.n_obstacles,
        episodes=len(records),
        success_rate=float(np.mean([r.success for r in records])),
        collisions_per_ep=float(np.mean([r.collisions for r in records])),
        path_length_m=float(np.mean([r.path_length for r in records])),
        compute_ms=total_ms / max(n_calls, 1),
        usage={name: calls / grand for name, calls in total_calls.items()},
    )


CSV_COLUMNS = ["planner", "map_kind", "n_obstacles", "episodes",
               "success_rate", "collisions_per_ep", "path_length_m",
               "compute_ms", "usage_teb", "usage_drl"]


def metrics_csv(metrics_list: list[Metrics]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for m in metrics_list:
        lines.append(",".join([
            m.planner, m.map_kind, str(m.n_obstacles), str(m.episodes),
            f"{m.success_rate:.4f}", f"{m.collisions_per_ep:.4f}",
            f"{m.path_length_m:.4f}", f"{m.compute_ms:.4f}",
            f"{m.usage.get('teb', 0.0):.4f}", f"{m.usage.get('drl', 0.0):.4f}",
        ]))
    return "\n".join(lines) + "\n"


def record_to_json(record: EpisodeRecord) -> dict:
    return {
        "v": 1,
        "scenario": dataclasses.asdict(record.scenario),
        "outcome": record.outcome.value,
        "path_length": record.path_length,
        "duration": record.duration,
        "collisions": record.collisions,
        "near_misses": record.near_misses,
        "planners": record.planners,
        "planner_usage": record.planner_usage,
        "planner_calls": record.planner_calls,
        "planner_total_ms": record.planner_total_ms,
        "trajectory": [[t, p.x, p.y, p.theta, pid]
                       for t, p, pid in record.trajectory],
        "error": record.error,
    }


def record_from_json(doc: dict) -> EpisodeRecord:
    if doc.get("v") != 1:
        raise ValueError(f"unsupported record version {doc.get('v')!r}")
    return EpisodeRecord(
        scenario=ScenarioConfig(**doc["scenario"]),
        outcome=EpisodeOutcome(doc["outcome"]),
        path_length=doc["path_length"],
        duration=doc["duration"],
        collisions=doc["collisions"],
        near_misses=doc["near_misses"],
        planners=list(doc["planners"]),
        planner_usage=dict(doc["planner_usage"]),
        planner_calls=dict(doc["planner_calls"]),
        planner_total_ms=dict(doc["planner_total_ms"]),
        trajectory=[(t, Pose2D(x, y, th), int(pid))
                    for t, x, y, th, pid in doc["trajectory"]],
        error=doc["error"],
    )


def save_records(records: list[EpisodeRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(record_to_json(r), separators=(",", ":")))
            f.write("\n")


def load_records(path) -> list[EpisodeRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                records.append(record_from_json(json.loads(line)))
    return records


def export(records: list[EpisodeRecord], metrics_list: list[Metrics],
           out_dir) -> list[Path]:
    """Write metrics.csv, records.jsonl and a trajectory overlay SVG."""
    from .render_svg import render_records
    if not records:
        raise EmptyInput("no records to export")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    try:
        csv_path = out / "metrics.csv"
        csv_path.write_text(metrics_csv(metrics_list), encoding="utf-8")
        paths.append(csv_path)
        jsonl_path = out / "records.jsonl"
        save_records(records, jsonl_path)
        paths.append(jsonl_path)
        svg_path = out / "trajectories.svg"
        render_records(records, svg_path)
        paths.append(svg_path)
    except OSError as e:
        raise OSError(f"export to {out} failed: {e}") from e
    return paths
