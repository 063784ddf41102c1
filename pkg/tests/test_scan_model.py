"""Raycasting, obstacle compositing, and static/dynamic decomposition."""

import math

import numpy as np
import pytest

from aionav.map_gen import OccupancyGrid, RESOLUTION
from aionav.scan_model import (DECOMPOSE_EPSILON, LaserScan, MAX_RANGE,
                               N_BEAMS, PoseOutOfBounds, ShapeMismatch,
                               beam_angles, decompose, raycast, scan_pair,
                               sensor_scan)
from aionav.sim_core import DynamicObstacle, Pose2D

from conftest import open_grid, world_in


def sampled_raycast(grid: OccupancyGrid, pose: Pose2D, angle: float,
                    max_range: float = MAX_RANGE, step: float = 0.001) -> float:
    """Walk the ray in 1 mm increments until an occupied cell."""
    n = int(max_range / step)
    for i in range(1, n + 1):
        t = i * step
        x = pose.x + t * math.cos(angle)
        y = pose.y + t * math.sin(angle)
        r, c = grid.world_to_cell(x, y)
        if not grid.in_bounds_cell(r, c) or grid.cells[r, c]:
            return t
    return max_range


class TestBeamAngles:
    def test_layout(self):
        a = beam_angles(Pose2D(0, 0, 0.5), 4)
        assert np.allclose(a, 0.5 + np.array([0, 0.5, 1.0, 1.5]) * math.pi)

    def test_count(self):
        assert len(beam_angles(Pose2D(0, 0), N_BEAMS)) == N_BEAMS


class TestRaycast:
    def test_against_sampled_oracle(self):
        rng = np.random.default_rng(3)
        grid = open_grid()
        cells = grid.cells.copy()
        blocks = rng.integers(10, 90, size=(25, 2))
        for r, c in blocks:
            cells[r:r + 3, c:c + 3] = True
        grid = OccupancyGrid(cells=cells, resolution=RESOLUTION)
        for _ in range(5):
            while True:
                x, y = rng.uniform(0.5, 4.5, size=2)
                r, c = grid.world_to_cell(x, y)
                if not grid.cells[r, c]:
                    break
            pose = Pose2D(x, y, rng.uniform(-math.pi, math.pi))
            scan = raycast(grid, pose, n_beams=72)
            angles = beam_angles(pose, 72)
            for i in range(0, 72, 7):
                want = sampled_raycast(grid, pose, angles[i])
                assert abs(scan.ranges[i] - want) <= RESOLUTION + 1e-9

    def test_open_space_max_range(self):
        grid = open_grid(200)
        scan = raycast(grid, Pose2D(5.0, 5.0, 0.0))
        assert np.all(scan.ranges == MAX_RANGE)

    def test_axis_aligned_wall_distance(self):
        grid = open_grid()
        scan = raycast(grid, Pose2D(0.5, 2.5, 0.0), n_beams=4)
        # Wall face at x = 0.10 m; the beam pointing -x sees it at 0.40 m.
        assert scan.ranges[2] == pytest.approx(0.40, abs=RESOLUTION)

    def test_pose_inside_wall_raises(self):
        grid = open_grid()
        with pytest.raises(PoseOutOfBounds):
            raycast(grid, Pose2D(0.01, 0.01, 0.0))
        with pytest.raises(PoseOutOfBounds):
            raycast(grid, Pose2D(-3.0, 2.0, 0.0))

    def test_ranges_never_exceed_max(self):
        grid = open_grid()
        scan = raycast(grid, Pose2D(2.0, 2.0, 0.3))
        assert np.all(scan.ranges <= MAX_RANGE)
        assert np.all(scan.ranges > 0)


class TestSensorScan:
    def test_disc_narrows_beams(self):
        grid = open_grid(200)
        ob = DynamicObstacle(x=6.5, y=5.0, radius=0.2, speed=0.0,
                             waypoint=(6.5, 5.0))
        w = world_in(grid, 5.0, 5.0, obstacles=[ob])
        scan = sensor_scan(w)
        assert scan.ranges[0] == pytest.approx(1.3, abs=1e-6)
        assert scan.ranges[180] == MAX_RANGE

    def test_wall_occludes_disc(self):
        grid = open_grid()
        ob = DynamicObstacle(x=-1.0, y=2.5, radius=0.3, speed=0.0,
                             waypoint=(-1.0, 2.5))
        w = world_in(grid, 0.5, 2.5, obstacles=[ob], goal=Pose2D(4, 4))
        with_ob = sensor_scan(w)
        w.obstacles = []
        without = sensor_scan(w)
        assert np.array_equal(with_ob.ranges, without.ranges)

    def test_origin_inside_disc_zeroes_scan(self):
        grid = open_grid(200)
        ob = DynamicObstacle(x=5.05, y=5.0, radius=0.2, speed=0.0,
                             waypoint=(5.05, 5.0))
        w = world_in(grid, 5.0, 5.0, obstacles=[ob])
        scan = sensor_scan(w)
        assert np.all(scan.ranges == 0.0)

    def test_disc_behind_origin_ignored(self):
        grid = open_grid(200)
        ob = DynamicObstacle(x=3.0, y=5.0, radius=0.2, speed=0.0,
                             waypoint=(3.0, 5.0))
        w = world_in(grid, 5.0, 5.0, obstacles=[ob])
        scan = sensor_scan(w)
        assert scan.ranges[0] == MAX_RANGE
        assert scan.ranges[180] == pytest.approx(1.8, abs=1e-6)


class TestDecompose:
    def make_pair(self, static_val, sensor_val):
        origin = Pose2D(0, 0)
        static = LaserScan(np.full(N_BEAMS, static_val), MAX_RANGE, origin)
        sensor = LaserScan(np.full(N_BEAMS, sensor_val), MAX_RANGE, origin)
        return static, sensor

    def test_partition_is_exhaustive(self):
        """Each beam lands in exactly one bucket: dynamic return or sentinel."""
        rng = np.random.default_rng(8)
        static = LaserScan(rng.uniform(0.2, MAX_RANGE, N_BEAMS), MAX_RANGE,
                           Pose2D(0, 0))
        sensor = LaserScan(np.clip(static.ranges + rng.normal(0, 0.2, N_BEAMS),
                                   0.0, MAX_RANGE), MAX_RANGE, Pose2D(0, 0))
        dyn = decompose(sensor, static)
        deviates = np.abs(sensor.ranges - static.ranges) > DECOMPOSE_EPSILON
        assert np.array_equal(dyn.ranges[deviates], sensor.ranges[deviates])
        assert np.all(dyn.ranges[~deviates] == sensor.sentinel)

    def test_epsilon_is_strict(self):
        """A deviation of exactly epsilon stays static. 0.25 is exactly
        representable, unlike the default threshold."""
        static, sensor = self.make_pair(2.0, 2.25)
        dyn = decompose(sensor, static, epsilon=0.25)
        assert np.all(dyn.ranges == sensor.sentinel)
        static, sensor = self.make_pair(2.0, 2.2500001)
        dyn = decompose(sensor, static, epsilon=0.25)
        assert np.all(dyn.ranges == sensor.ranges)

    def test_matching_scans_all_sentinel(self):
        static, sensor = self.make_pair(1.5, 1.5)
        assert np.all(decompose(sensor, static).ranges == MAX_RANGE + 1.0)

    def test_shape_mismatch(self):
        static = LaserScan(np.full(100, 1.0), MAX_RANGE, Pose2D(0, 0))
        sensor = LaserScan(np.full(N_BEAMS, 1.0), MAX_RANGE, Pose2D(0, 0))
        with pytest.raises(ShapeMismatch):
            decompose(sensor, static)

    def test_scan_pair_consistent_with_parts(self):
        grid = open_grid(200)
        ob = DynamicObstacle(x=6.0, y=5.0, radius=0.2, speed=0.0,
                             waypoint=(6.0, 5.0))
        w = world_in(grid, 5.0, 5.0, obstacles=[ob])
        pair = scan_pair(w)
        static = raycast(grid, w.robot)
        sensor = sensor_scan(w, static=static)
        assert np.array_equal(pair.static_scan.ranges, static.ranges)
        assert np.array_equal(pair.dynamic_scan.ranges,
                              decompose(sensor, static).ranges)
        hit = pair.dynamic_scan.ranges <= MAX_RANGE
        assert hit.any()
        assert np.all(pair.dynamic_scan.ranges[hit] < 1.0 + 1e-6)
