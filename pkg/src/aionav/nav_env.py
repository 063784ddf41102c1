"""Episode engine tying the world, sensing, global planning, and local
planners together, plus the two reinforcement-learning environments (switch
decisions at 2 Hz, reactive commands at 10 Hz)."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, replace

import numpy as np

from .global_planner import (GoalField, GlobalPath, InvalidEndpoint, NoPath,
                             Costmap, inflate, maybe_replan, sample_subgoal)
from .local_planners import (PlannerInput, PlannerRegistry, REACTIVE_COMMANDS,
                             reactive_observation)
from .map_gen import OccupancyGrid, ScenarioConfig, generate_map, spawn_episode
from .rewards import RewardBreakdown, reward_step, with_terminal
from .scan_model import (LaserScan, N_BEAMS, MAX_RANGE, PoseOutOfBounds,
                         ScanPair, decompose, raycast, sensor_scan)
from .sim_core import (DynamicObstacle, EpisodeOutcome, Pose2D,
                       VelocityCommand, WorldState, check_terminal,
                       step_robot, step_obstacles, DT, TICKS_PER_LOCAL,
                       LOCALS_PER_SWITCH, MAX_LOCAL_STEPS)
from .switch_agent import SwitchObservation, build_observation

_SETUP_CACHE: OrderedDict = OrderedDict()
_SETUP_CACHE_MAX = 8


@dataclass
class EpisodeSetup:
    """Immutable per-scenario artifacts; obstacle templates are copied into
    each fresh world."""

    config: ScenarioConfig
    grid: OccupancyGrid
    costmap: Costmap
    goal_field: GoalField
    start: Pose2D
    goal: Pose2D
    obstacles: list[DynamicObstacle]


def build_episode(config: ScenarioConfig) -> EpisodeSetup:
    key = (config.map_kind, config.difficulty, config.n_obstacles,
           config.obstacle_speed, config.seed)
    if key in _SETUP_CACHE:
        _SETUP_CACHE.move_to_end(key)
        return _SETUP_CACHE[key]
    grid = generate_map(config)
    start, goal, obstacles = spawn_episode(grid, config)
    costmap = inflate(grid)
    goal_field = GoalField(costmap, goal)
    setup = EpisodeSetup(config=config, grid=grid, costmap=costmap,
                         goal_field=goal_field, start=start, goal=goal,
                         obstacles=obstacles)
    _SETUP_CACHE[key] = setup
    while len(_SETUP_CACHE) > _SETUP_CACHE_MAX:
        _SETUP_CACHE.popitem(last=False)
    return setup


def fresh_world(setup: EpisodeSetup) -> WorldState:
    obstacles = [replace(ob) for ob in setup.obstacles]
    rng = np.random.default_rng((setup.config.seed, 0xE9))
    return WorldState(robot=setup.start.copy(), velocity=VelocityCommand(),
                      obstacles=obstacles, static_grid=setup.grid,
                      goal=setup.goal.copy(), rng_seed=setup.config.seed,
                      rng=rng)


class NavEpisode:
    """One episode: 20 Hz physics, 10 Hz local-planner commands, 1 Hz global
    replans. safety_from picks which scan drives the proximity penalty
    ("dynamic" residual for the switch, "sensor" for the reactive policy)."""

    def __init__(self, setup: EpisodeSetup, safety_from: str = "dynamic",
                 max_steps: int = MAX_LOCAL_STEPS, record: bool = False):
        self.setup = setup
        self.world = fresh_world(setup)
        self.safety_from = safety_from
        self.max_steps = max_steps
        self.local_steps = 0
        self.outcome: EpisodeOutcome | None = None
        self.path: GlobalPath = setup.goal_field.path_from(
            self.world.robot, created_at=0.0)
        self.last_plan = 0.0
        self._refresh_scans()
        self.subgoal = sample_subgoal(self.path, self.world.robot)
        self.trajectory: list | None = [] if record else None
        if record:
            self.trajectory.append((0.0, self.world.robot.copy(), -1))

    @property
    def done(self) -> bool:
        return self.outcome is not None

    def _refresh_scans(self) -> None:
        robot = self.world.robot
        try:
            static = raycast(self.setup.grid, robot)
            sensor = sensor_scan(self.world, static=static)
        except PoseOutOfBounds:
            zeros = LaserScan(np.zeros(N_BEAMS), MAX_RANGE, robot.copy())
            static = sensor = zeros
        self.static_scan = static
        self.sensor = sensor
        self.pair = ScanPair(static_scan=static,
                             dynamic_scan=decompose(sensor, static))

    def _update_plan(self) -> None:
        if not maybe_replan(self.world.sim_time, self.last_plan):
            return
        try:
            self.path = self.setup.goal_field.path_from(
                self.world.robot, created_at=self.world.sim_time)
            self.last_plan = self.world.sim_time
        except (InvalidEndpoint, NoPath):
            pass  # keep the stale path while inside the inflation band

    def planner_input(self) -> PlannerInput:
        return PlannerInput(sensor_scan=self.sensor,
                            robot=self.world.robot.copy(),
                            velocity=self.world.velocity,
                            subgoal=self.subgoal.copy(),
                            global_path=self.path,
                            sim_time=self.world.sim_time)

    def observation(self) -> SwitchObservation:
        return build_observation(self.pair, self.world.robot,
                                 self.world.goal, self.subgoal)

    def local_step(self, cmd: VelocityCommand,
                   planner_id: int = -1) -> RewardBreakdown:
        """Hold one command for 100 ms of physics; returns the step reward
        (terminal component folded in when the episode ends here)."""
        if self.done:
            raise RuntimeError("episode is over")
        prev_robot = self.world.robot.copy()
        subgoal = self.subgoal
        for _ in range(TICKS_PER_LOCAL):
            step_robot(self.world, cmd, DT)
            step_obstacles(self.world, DT)
        self.local_steps += 1
        self._refresh_scans()
        self.outcome = check_terminal(self.world, self.sensor,
                                      self.local_steps, self.max_steps)
        safety = (self.pair.dynamic_scan if self.safety_from == "dynamic"
                  else self.sensor)
        breakdown = reward_step(prev_robot, self.world.robot, subgoal,
                                safety, self.path)
        if self.outcome is not None:
            breakdown = with_terminal(breakdown, self.outcome)
        if self.trajectory is not None:
            self.trajectory.append(
                (self.world.sim_time, self.world.robot.copy(), planner_id))
        if self.outcome is None:
            self._update_plan()
            self.subgoal = sample_subgoal(self.path, self.world.robot)
        return breakdown


class SwitchEnv:
    """Discrete planner choice held for 5 local steps; the reward is the sum
    accrued while the decision was held."""

    def __init__(self, registry: PlannerRegistry,
                 max_steps: int = MAX_LOCAL_STEPS):
        self.registry = registry
        self.max_steps = max_steps
        self.episode: NavEpisode | None = None

    def reset(self, config: ScenarioConfig) -> SwitchObservation:
        self.registry.reset()
        self.episode = NavEpisode(build_episode(config), safety_from="dynamic",
                                  max_steps=self.max_steps)
        return self.episode.observation()

    def step(self, action: int):
        ep = self.episode
        total = RewardBreakdown()
        steps = 0
        for _ in range(LOCALS_PER_SWITCH):
            cmd = self.registry.trigger_by_id(action, ep.planner_input())
            total = total.add(ep.local_step(cmd, planner_id=action))
            steps += 1
            if ep.done:
                break
        info = {"outcome": ep.outcome, "local_steps": steps,
                "success": ep.outcome is EpisodeOutcome.GoalReached,
                "breakdown": total}
        return ep.observation(), total.total, ep.done, info


class ReactiveEnv:
    """Direct 9-command control at the 10 Hz local cadence; proximity
    penalties come from the raw sensor scan."""

    def __init__(self, max_steps: int = MAX_LOCAL_STEPS):
        self.max_steps = max_steps
        self.episode: NavEpisode | None = None

    def _obs(self) -> tuple[np.ndarray, np.ndarray]:
        return reactive_observation(self.episode.planner_input())

    def reset(self, config: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
        self.episode = NavEpisode(build_episode(config), safety_from="sensor",
                                  max_steps=self.max_steps)
        return self._obs()

    def step(self, action: int):
        ep = self.episode
        cmd = VelocityCommand(*REACTIVE_COMMANDS[action])
        breakdown = ep.local_step(cmd)
        info = {"outcome": ep.outcome,
                "success": ep.outcome is EpisodeOutcome.GoalReached,
                "breakdown": breakdown}
        return self._obs(), breakdown.total, ep.done, info
