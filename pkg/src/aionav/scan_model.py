"""Lidar simulation on occupancy grids and the static/dynamic scan
decomposition consumed by the control switch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .map_gen import OccupancyGrid
from .sim_core import Pose2D, WorldState

N_BEAMS = 360
MAX_RANGE = 3.5
DECOMPOSE_EPSILON = 0.1


class PoseOutOfBounds(Exception):
    pass


class ShapeMismatch(Exception):
    pass


@dataclass
class LaserScan:
    ranges: np.ndarray
    max_range: float = MAX_RANGE
    origin: Pose2D = None

    @property
    def n_beams(self) -> int:
        return len(self.ranges)

    @property
    def sentinel(self) -> float:
        """Marker for beams with no return, one unit beyond max range."""
        return self.max_range + 1.0


@dataclass
class ScanPair:
    static_scan: LaserScan
    dynamic_scan: LaserScan


def beam_angles(pose: Pose2D, n_beams: int) -> np.ndarray:
    return pose.theta + 2.0 * np.pi * np.arange(n_beams) / n_beams


def raycast(grid: OccupancyGrid, pose: Pose2D, n_beams: int = N_BEAMS,
            max_range: float = MAX_RANGE) -> LaserScan:
    """Cast n equally spaced beams through the grid (cell-by-cell traversal)
    and return the distance to the first occupied cell, or max_range."""
    res = grid.resolution
    r0, c0 = grid.world_to_cell(pose.x, pose.y)
    if not grid.in_bounds_cell(r0, c0) or grid.is_occupied_cell(r0, c0):
        raise PoseOutOfBounds(f"pose ({pose.x:.3f}, {pose.y:.3f})")

    angles = beam_angles(pose, n_beams)
    dx = np.cos(angles)
    dy = np.sin(angles)
    step_x = np.where(dx > 0, 1, -1)
    step_y = np.where(dy > 0, 1, -1)
    with np.errstate(divide="ignore"):
        t_delta_x = np.abs(res / dx)
        t_delta_y = np.abs(res / dy)

    cx = np.full(n_beams, c0, dtype=np.int64)
    cy = np.full(n_beams, r0, dtype=np.int64)
    next_x = (cx + (step_x > 0)) * res
    next_y = (cy + (step_y > 0)) * res
    with np.errstate(divide="ignore", invalid="ignore"):
        t_max_x = np.where(dx != 0, (next_x - pose.x) / dx, np.inf)
        t_max_y = np.where(dy != 0, (next_y - pose.y) / dy, np.inf)

    cells = grid.cells
    h, w = cells.shape
    ranges = np.full(n_beams, max_range, dtype=float)
    alive = np.ones(n_beams, dtype=bool)
    while alive.any():
        cross_x = t_max_x <= t_max_y
        t_cross = np.where(cross_x, t_max_x, t_max_y)
        alive &= t_cross <= max_range
        mx = alive & cross_x
        my = alive & ~cross_x
        cx += np.where(mx, step_x, 0)
        cy += np.where(my, step_y, 0)
        t_max_x += np.where(mx, t_delta_x, 0.0)
        t_max_y += np.where(my, t_delta_y, 0.0)
        alive &= (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
        act = alive.nonzero()[0]
        if act.size:
            hits = act[cells[cy[act], cx[act]]]
            ranges[hits] = t_cross[hits]
            alive[hits] = False
    return LaserScan(ranges=ranges, max_range=max_range, origin=pose.copy())


def _disc_intersections(pose: Pose2D, n_beams: int, cx: float, cy: float,
                        radius: float) -> np.ndarray:
    """Per-beam distance to a disc; inf where the beam misses it."""
    angles = beam_angles(pose, n_beams)
    dx = np.cos(angles)
    dy = np.sin(angles)
    relx = cx - pose.x
    rely = cy - pose.y
    if relx * relx + rely * rely <= radius * radius:
        return np.zeros(n_beams)
    proj = relx * dx + rely * dy
    d2 = relx * relx + rely * rely - proj * proj
    disc = radius * radius - d2
    t = np.where(disc >= 0, proj - np.sqrt(np.maximum(disc, 0.0)), np.inf)
    return np.where(t >= 0, t, np.inf)


def sensor_scan(world: WorldState, n_beams: int = N_BEAMS,
                max_range: float = MAX_RANGE,
                static: LaserScan | None = None) -> LaserScan:
    """Raycast against the static grid with obstacle discs composited in
    (per-beam minimum, so walls occlude discs behind them)."""
    if static is None:
        static = raycast(world.static_grid, world.robot, n_beams, max_range)
    ranges = static.ranges.copy()
    for ob in world.obstacles:
        t = _disc_intersections(world.robot, n_beams, ob.x, ob.y, ob.radius)
        ranges = np.minimum(ranges, np.minimum(t, max_range))
    return LaserScan(ranges=ranges, max_range=max_range,
                     origin=world.robot.copy())


def decompose(sensor: LaserScan, static: LaserScan,
              epsilon: float = DECOMPOSE_EPSILON) -> LaserScan:
    """Residual scan: sensor value where it deviates from the static
    expectation by more than epsilon, else the no-return sentinel."""
    if sensor.n_beams != static.n_beams:
        raise ShapeMismatch(
            f"beam counts differ: {sensor.n_beams} vs {static.n_beams}")
    dynamic = np.where(
        np.abs(sensor.ranges - static.ranges) > epsilon,
        sensor.ranges, sensor.sentinel)
    return LaserScan(ranges=dynamic, max_range=sensor.max_range,
                     origin=sensor.origin)


def scan_pair(world: WorldState, sensor: LaserScan | None = None,
              static: LaserScan | None = None,
              epsilon: float = DECOMPOSE_EPSILON) -> ScanPair:
    if static is None:
        static = raycast(world.static_grid, world.robot)
    if sensor is None:
        sensor = sensor_scan(world, static=static)
    return ScanPair(static_scan=static, dynamic_scan=decompose(sensor, static, epsilon))
