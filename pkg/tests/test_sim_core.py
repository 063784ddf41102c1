"""Kinematics, command clamping, obstacle motion, and terminal checks."""

import math

import numpy as np
import pytest

from aionav.map_gen import OccupancyGrid
from aionav.scan_model import LaserScan, MAX_RANGE
from aionav.sim_core import (DT, DynamicObstacle, EpisodeOutcome, GOAL_RADIUS,
                             MAX_LOCAL_STEPS, Pose2D, ROBOT_RADIUS,
                             V_MAX, V_MIN, VelocityCommand, W_MAX, W_MIN,
                             check_terminal, integrate_arc, normalize_angle,
                             step_obstacles, step_robot)

from conftest import open_grid, world_in


def euler_oracle(pose: Pose2D, v: float, w: float, dt: float,
                 substeps: int = 1000) -> Pose2D:
    """Brute-force integration of the unicycle ODE."""
    x, y, th = pose.x, pose.y, pose.theta
    h = dt / substeps
    for _ in range(substeps):
        x += v * math.cos(th) * h
        y += v * math.sin(th) * h
        th += w * h
    return Pose2D(x, y, th)


class TestNormalizeAngle:
    def test_identity_in_range(self):
        assert normalize_angle(1.0) == pytest.approx(1.0)
        assert normalize_angle(-3.0) == pytest.approx(-3.0)

    def test_wraps_multiples(self):
        assert normalize_angle(2 * math.pi + 0.5) == pytest.approx(0.5)
        assert normalize_angle(-2 * math.pi - 0.5) == pytest.approx(-0.5)
        assert normalize_angle(7 * math.pi) == pytest.approx(math.pi)

    def test_half_open_interval(self):
        """pi maps to pi, -pi maps to pi: interval is (-pi, pi]."""
        assert normalize_angle(math.pi) == pytest.approx(math.pi)
        assert normalize_angle(-math.pi) == pytest.approx(math.pi)


class TestPose2D:
    def test_theta_normalized_on_init(self):
        assert Pose2D(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)

    def test_distance(self):
        assert Pose2D(0, 0).distance_to(Pose2D(3, 4)) == pytest.approx(5.0)

    def test_copy_is_independent(self):
        a = Pose2D(1, 2, 0.5)
        b = a.copy()
        b.x = 9
        assert a.x == 1


class TestVelocityCommand:
    def test_clamps_both_axes(self):
        c = VelocityCommand(10.0, -10.0)
        assert c.linear == V_MAX
        assert c.angular == W_MIN

    def test_reverse_bound(self):
        assert VelocityCommand(-1.0, 0.0).linear == V_MIN

    def test_inside_bounds_untouched(self):
        c = VelocityCommand(0.1, -1.3)
        assert (c.linear, c.angular) == (0.1, -1.3)


class TestIntegrateArc:
    def test_matches_fine_euler(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            pose = Pose2D(rng.uniform(-5, 5), rng.uniform(-5, 5),
                          rng.uniform(-math.pi, math.pi))
            v = rng.uniform(V_MIN, V_MAX)
            w = rng.uniform(W_MIN, W_MAX)
            got = integrate_arc(pose, v, w, DT)
            want = euler_oracle(pose, v, w, DT)
            assert abs(got.x - want.x) < 1e-5
            assert abs(got.y - want.y) < 1e-5
            assert abs(normalize_angle(got.theta - want.theta)) < 1e-5

    def test_straight_line_branch(self):
        got = integrate_arc(Pose2D(0, 0, math.pi / 4), 0.2, 0.0, 1.0)
        assert got.x == pytest.approx(0.2 * math.cos(math.pi / 4))
        assert got.y == pytest.approx(0.2 * math.sin(math.pi / 4))
        assert got.theta == pytest.approx(math.pi / 4)

    def test_tiny_omega_continuous(self):
        """The straight branch must agree with the arc branch at the seam."""
        a = integrate_arc(Pose2D(0, 0, 0.3), 0.3, 9.9e-7, DT)
        b = integrate_arc(Pose2D(0, 0, 0.3), 0.3, 1.1e-6, DT)
        assert abs(a.x - b.x) < 1e-9
        assert abs(a.y - b.y) < 1e-9

    def test_full_circle_returns_home(self):
        pose = Pose2D(1.0, 2.0, 0.7)
        v, w = 0.3, 2.7
        period = 2 * math.pi / w
        got = integrate_arc(pose, v, w, period)
        assert got.x == pytest.approx(pose.x, abs=1e-9)
        assert got.y == pytest.approx(pose.y, abs=1e-9)


class TestStepRobot:
    def test_advances_time_and_velocity(self):
        w = world_in(open_grid(), 2.0, 2.0)
        cmd = VelocityCommand(0.3, 0.0)
        step_robot(w, cmd, DT)
        assert w.sim_time == pytest.approx(DT)
        assert w.velocity is cmd
        assert w.robot.x == pytest.approx(2.0 + 0.3 * DT)


class TestStepObstacles:
    def make_world(self, waypoint, speed=0.3):
        grid = open_grid()
        ob = DynamicObstacle(x=2.0, y=2.0, radius=0.15, speed=speed,
                             waypoint=waypoint)
        return world_in(grid, 4.0, 4.0, obstacles=[ob])

    def test_moves_toward_waypoint(self):
        w = self.make_world((3.0, 2.0))
        step_obstacles(w, 1.0)
        ob = w.obstacles[0]
        assert ob.x == pytest.approx(2.3)
        assert ob.y == pytest.approx(2.0)

    def test_no_overshoot(self):
        w = self.make_world((2.1, 2.0), speed=0.3)
        step_obstacles(w, 1.0)
        assert w.obstacles[0].x == pytest.approx(2.1)

    def test_arrival_redraws_waypoint_without_moving(self):
        w = self.make_world((2.0, 2.05))
        step_obstacles(w, 1.0)
        ob = w.obstacles[0]
        assert (ob.x, ob.y) == (2.0, 2.0)
        assert ob.waypoint != (2.0, 2.05)

    def test_blocked_motion_keeps_position(self):
        grid = open_grid()
        ob = DynamicObstacle(x=0.5, y=2.0, radius=0.25, speed=0.3,
                             waypoint=(0.0, 2.0))
        w = world_in(grid, 4.0, 4.0, obstacles=[ob])
        assert grid.clearance_at(0.5 - 0.3, 2.0) < ob.radius
        step_obstacles(w, 1.0)
        assert (w.obstacles[0].x, w.obstacles[0].y) == (0.5, 2.0)

    def test_waypoint_draws_deterministic(self):
        a = self.make_world((2.0, 2.0))
        b = self.make_world((2.0, 2.0))
        for _ in range(5):
            step_obstacles(a, 1.0)
            step_obstacles(b, 1.0)
        assert a.obstacles[0].waypoint == b.obstacles[0].waypoint


class TestCheckTerminal:
    def scan(self, min_range: float) -> LaserScan:
        ranges = np.full(360, MAX_RANGE)
        ranges[7] = min_range
        return LaserScan(ranges=ranges, max_range=MAX_RANGE,
                         origin=Pose2D(0, 0))

    def test_collision_threshold_strict(self):
        w = world_in(open_grid(), 2.0, 2.0)
        assert check_terminal(w, self.scan(ROBOT_RADIUS - 1e-6), 0) \
            is EpisodeOutcome.Collision
        assert check_terminal(w, self.scan(ROBOT_RADIUS), 0) is None

    def test_goal_radius(self):
        grid = open_grid()
        w = world_in(grid, 2.0, 2.0, goal=Pose2D(2.0, 2.0 + GOAL_RADIUS - 0.01))
        assert check_terminal(w, self.scan(1.0), 0) is EpisodeOutcome.GoalReached

    def test_collision_beats_goal(self):
        w = world_in(open_grid(), 2.0, 2.0, goal=Pose2D(2.0, 2.1))
        assert check_terminal(w, self.scan(0.1), 0) is EpisodeOutcome.Collision

    def test_max_iterations(self):
        w = world_in(open_grid(), 2.0, 2.0)
        assert check_terminal(w, self.scan(1.0), MAX_LOCAL_STEPS) \
            is EpisodeOutcome.MaxIterations
        assert check_terminal(w, self.scan(1.0), MAX_LOCAL_STEPS - 1) is None

    def test_goal_beats_max_iterations(self):
        grid = open_grid()
        w = world_in(grid, 2.0, 2.0, goal=Pose2D(2.0, 2.1))
        assert check_terminal(w, self.scan(1.0), MAX_LOCAL_STEPS) \
            is EpisodeOutcome.GoalReached
