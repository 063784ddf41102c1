"""Deterministic fixed-timestep 2D world: differential-drive robot, moving
disc obstacles, collision and goal detection."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# Robot / episode geometry.
ROBOT_RADIUS = 0.15
GOAL_RADIUS = 0.3
V_MIN, V_MAX = -0.15, 0.3
W_MIN, W_MAX = -2.7, 2.7

# Cadences: physics tick, local planner every 2 ticks (100 ms), switch
# decision every 5 local steps (2 Hz).
DT = 0.05
TICKS_PER_LOCAL = 2
LOCALS_PER_SWITCH = 5
MAX_LOCAL_STEPS = 1200

WAYPOINT_ARRIVAL = 0.1


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = (theta + math.pi) % (2.0 * math.pi) - math.pi
    if a == -math.pi:
        a = math.pi
    return a


@dataclass
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        self.theta = normalize_angle(self.theta)

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def copy(self) -> "Pose2D":
        return Pose2D(self.x, self.y, self.theta)


@dataclass
class VelocityCommand:
    """(v, w) command, clamped to the platform's velocity bounds."""

    linear: float = 0.0
    angular: float = 0.0

    def __post_init__(self):
        self.linear = min(max(float(self.linear), V_MIN), V_MAX)
        self.angular = min(max(float(self.angular), W_MIN), W_MAX)


@dataclass
class DynamicObstacle:
    """Disc moving in straight segments between random free waypoints."""

    x: float
    y: float
    radius: float
    speed: float = 0.3
    waypoint: tuple[float, float] = (0.0, 0.0)


class EpisodeOutcome(enum.Enum):
    GoalReached = "goal_reached"
    Collision = "collision"
    MaxIterations = "max_iterations"


@dataclass
class WorldState:
    robot: Pose2D
    velocity: VelocityCommand
    obstacles: list[DynamicObstacle]
    static_grid: "OccupancyGrid"  # noqa: F821 - map_gen.OccupancyGrid
    goal: Pose2D
    sim_time: float = 0.0
    rng_seed: int = 0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if self.rng is None:
            self.rng = np.random.default_rng(self.rng_seed)


def integrate_arc(pose: Pose2D, v: float, w: float, dt: float) -> Pose2D:
    """Exact unicycle arc integration; straight-line limit for tiny |w|."""
    if abs(w) < 1e-6:
        return Pose2D(
            pose.x + v * math.cos(pose.theta) * dt,
            pose.y + v * math.sin(pose.theta) * dt,
            pose.theta + w * dt,
        )
    th1 = pose.theta + w * dt
    r = v / w
    return Pose2D(
        pose.x + r * (math.sin(th1) - math.sin(pose.theta)),
        pose.y - r * (math.cos(th1) - math.cos(pose.theta)),
        th1,
    )


def step_robot(state: WorldState, cmd: VelocityCommand, dt: float) -> WorldState:
    """Advance the robot pose by one physics tick. Mutates and returns state."""
    state.robot = integrate_arc(state.robot, cmd.linear, cmd.angular, dt)
    state.velocity = cmd
    state.sim_time += dt
    return state


def _draw_waypoint(grid, radius: float, rng: np.random.Generator) -> tuple[float, float]:
    free = grid.cells_with_clearance(radius)
    idx = rng.integers(0, len(free))
    r, c = free[idx]
    return grid.cell_center(r, c)


def step_obstacles(state: WorldState, dt: float) -> WorldState:
    """Move each obstacle toward its waypoint; redraw waypoint on arrival.

    Motion is clipped so discs never overlap occupied static cells; a
    blocked obstacle keeps its position and draws a fresh waypoint.
    """
    grid = state.static_grid
    for ob in state.obstacles:
        dx = ob.waypoint[0] - ob.x
        dy = ob.waypoint[1] - ob.y
        dist = math.hypot(dx, dy)
        if dist < WAYPOINT_ARRIVAL:
            ob.waypoint = _draw_waypoint(grid, ob.radius, state.rng)
            continue
        step = min(ob.speed * dt, dist)
        nx = ob.x + dx / dist * step
        ny = ob.y + dy / dist * step
        if grid.clearance_at(nx, ny) >= ob.radius:
            ob.x, ob.y = nx, ny
        else:
            ob.waypoint = _draw_waypoint(grid, ob.radius, state.rng)
    return state


def check_terminal(state: WorldState, sensor_scan, iteration: int,
                   max_iter: int = MAX_LOCAL_STEPS) -> EpisodeOutcome | None:
    """Terminal test with precedence Collision > GoalReached > MaxIterations."""
    if float(np.min(sensor_scan.ranges)) < ROBOT_RADIUS:
        return EpisodeOutcome.Collision
    if state.robot.distance_to(state.goal) < GOAL_RADIUS:
        return EpisodeOutcome.GoalReached
    if iteration >= max_iter:
        return EpisodeOutcome.MaxIterations
    return None
