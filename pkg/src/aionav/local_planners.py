"""Service-triggered local planners: a dynamic-window sampler (baseline), a
simplified elastic-band optimizer, and the learned reactive policy. All are
invoked explicitly through a registry that times each call."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import nets
from .global_planner import GlobalPath
from .scan_model import LaserScan
from .sim_core import (Pose2D, VelocityCommand, normalize_angle,
                       ROBOT_RADIUS, V_MAX, V_MIN, W_MAX, W_MIN)
from .switch_agent import downsample_scan, polar_features

# Dynamic-window search.
DWA_V_SAMPLES = 7
DWA_W_SAMPLES = 15
DWA_HORIZON = 1.5
DWA_DT = 0.1
DWA_W_HEADING = 1.0
DWA_W_CLEARANCE = 0.5
DWA_W_VELOCITY = 0.5
DWA_W_GOALDIST = 1.0
DWA_CLEARANCE_CAP = 1.0

# Elastic-band optimizer.
TEB_POSES = 15
TEB_ITERS = 40
TEB_STEP = 0.05
TEB_MIN_DT = 0.01
TEB_SAFE_DIST = 0.5
TEB_OBST_CUTOFF = 2.0
TEB_OBST_SUBSAMPLE = 5
TEB_W_OBST = 10.0
TEB_W_VEL = 10.0
TEB_W_KIN = 50.0
TEB_INIT_SPEED = 0.2
TEB_DEGENERATE_DIST = 0.05
TEB_CONTROL_ARC = 0.15
TEB_MAX_DT = 2.0

REACTIVE_COMMANDS = tuple(
    (v, w) for v in (0.0, 0.15, 0.3) for w in (-2.7, 0.0, 2.7))


class UnknownId(Exception):
    pass


class PolicyNotLoaded(Exception):
    pass


@dataclass
class PlannerId:
    index: int
    name: str


@dataclass
class PlannerInput:
    sensor_scan: LaserScan
    robot: Pose2D
    velocity: VelocityCommand
    subgoal: Pose2D
    global_path: GlobalPath | None = None
    sim_time: float = 0.0


def scan_points(scan: LaserScan, limit: float | None = None,
                subsample: int = 1) -> np.ndarray:
    """(N, 2) world coordinates of beam returns closer than the limit."""
    if limit is None:
        limit = scan.max_range
    n = scan.n_beams
    angles = scan.origin.theta + 2.0 * np.pi * np.arange(n) / n
    ranges = scan.ranges
    keep = ranges < limit
    keep[np.arange(n) % subsample != 0] = False
    r = ranges[keep]
    a = angles[keep]
    return np.stack([scan.origin.x + r * np.cos(a),
                     scan.origin.y + r * np.sin(a)], axis=1)


def _rollout_positions(pose: Pose2D, v: np.ndarray, w: np.ndarray,
                       ts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form constant-command arcs: (C, T) x/y/theta arrays."""
    straight = np.abs(w) < 1e-6
    wt = w[:, None] * ts[None, :]
    theta = pose.theta + wt
    w_safe = np.where(straight, 1.0, w)
    r = v / w_safe
    x_arc = pose.x + r[:, None] * (np.sin(theta) - math.sin(pose.theta))
    y_arc = pose.y - r[:, None] * (np.cos(theta) - math.cos(pose.theta))
    x_str = pose.x + v[:, None] * ts[None, :] * math.cos(pose.theta)
    y_str = pose.y + v[:, None] * ts[None, :] * math.sin(pose.theta)
    x = np.where(straight[:, None], x_str, x_arc)
    y = np.where(straight[:, None], y_str, y_arc)
    return x, y, theta


def dwa_trigger(inp: PlannerInput) -> VelocityCommand:
    """Exhaustive (v, w) lattice scored over 1.5 s rollouts; colliding
    rollouts are excluded; full surround blockage falls back to rotating in
    place."""
    vs = np.linspace(V_MIN, V_MAX, DWA_V_SAMPLES)
    ws = np.linspace(W_MIN, W_MAX, DWA_W_SAMPLES)
    v_grid, w_grid = np.meshgrid(vs, ws, indexing="ij")
    v_flat = v_grid.ravel()
    w_flat = w_grid.ravel()
    n_steps = int(round(DWA_HORIZON / DWA_DT))
    ts = DWA_DT * np.arange(1, n_steps + 1)
    x, y, theta = _rollout_positions(inp.robot, v_flat, w_flat, ts)

    points = scan_points(inp.sensor_scan)
    if len(points):
        d = np.sqrt((x[:, :, None] - points[None, None, :, 0]) ** 2
                    + (y[:, :, None] - points[None, None, :, 1]) ** 2)
        clearance = d.min(axis=(1, 2))
    else:
        clearance = np.full(len(v_flat), np.inf)
    admissible = clearance >= ROBOT_RADIUS
    if not admissible.any():
        return VelocityCommand(0.0, W_MAX)

    ex = x[:, -1]
    ey = y[:, -1]
    to_sub = np.arctan2(inp.subgoal.y - ey, inp.subgoal.x - ex)
    at_sub = np.hypot(inp.subgoal.x - ex, inp.subgoal.y - ey) < 1e-9
    heading_err = np.abs(np.arctan2(np.sin(to_sub - theta[:, -1]),
                                    np.cos(to_sub - theta[:, -1])))
    heading_err[at_sub] = 0.0
    # Goal-distance bias plus a capped, normalized clearance deficit; an
    # unbounded 1/clearance term freezes the robot whenever any progress
    # would shave clearance (admissibility already vetoes unsafe arcs).
    end_dist = np.hypot(inp.subgoal.x - ex, inp.subgoal.y - ey)
    deficit = 1.0 - np.minimum(clearance, DWA_CLEARANCE_CAP) / DWA_CLEARANCE_CAP
    cost = (DWA_W_HEADING * heading_err / math.pi
            + DWA_W_CLEARANCE * deficit
            + DWA_W_VELOCITY * (1.0 - v_flat / V_MAX)
            + DWA_W_GOALDIST * end_dist)

    idx = np.flatnonzero(admissible)
    order = np.lexsort((w_flat[idx], np.abs(w_flat[idx]),
                        -v_flat[idx], cost[idx]))
    best = idx[order[0]]
    return VelocityCommand(float(v_flat[best]), float(w_flat[best]))


def _init_band(inp: PlannerInput) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """15 poses from robot to subgoal, following the global path when one is
    available; endpoints are pinned."""
    n = TEB_POSES
    pts = None
    path = inp.global_path
    if path is not None and len(path.waypoints) > 1:
        s0, _ = path.project(inp.robot.x, inp.robot.y)
        s1, _ = path.project(inp.subgoal.x, inp.subgoal.y)
        if s1 > s0 + 1e-6:
            ss = np.linspace(s0, s1, n)
            pts = np.array([[p.x, p.y] for p in (path.point_at(s) for s in ss)])
    if pts is None:
        t = np.linspace(0.0, 1.0, n)
        pts = np.stack([inp.robot.x + t * (inp.subgoal.x - inp.robot.x),
                        inp.robot.y + t * (inp.subgoal.y - inp.robot.y)], axis=1)
    pts[0] = (inp.robot.x, inp.robot.y)
    pts[-1] = (inp.subgoal.x, inp.subgoal.y)
    xs = pts[:, 0].copy()
    ys = pts[:, 1].copy()
    ths = np.empty(n)
    ths[:-1] = np.arctan2(np.diff(ys), np.diff(xs))
    ths[-1] = inp.subgoal.theta
    ths[0] = inp.robot.theta
    seg = np.hypot(np.diff(xs), np.diff(ys))
    dth = np.arctan2(np.sin(np.diff(ths)), np.cos(np.diff(ths)))
    # Time to translate or to rotate, whichever dominates; otherwise the
    # velocity-bound hinges explode the interval on the first iterations.
    dts = np.maximum(np.maximum(seg / TEB_INIT_SPEED, np.abs(dth) / W_MAX),
                     TEB_MIN_DT)
    return xs, ys, ths, dts


def _band_cost(xs, ys, ths, dts, points) -> float:
    cost = float(dts.sum())
    if len(points):
        d = np.hypot(xs[:, None] - points[None, :, 0],
                     ys[:, None] - points[None, :, 1])
        h = np.maximum(0.0, TEB_SAFE_DIST - d)
        cost += TEB_W_OBST * float((h * h).sum())
    dx = xs[1:] - xs[:-1]
    dy = ys[1:] - ys[:-1]
    c = np.cos(ths[:-1])
    s = np.sin(ths[:-1])
    v = (c * dx + s * dy) / dts
    over = np.maximum(0.0, v - V_MAX)
    under = np.maximum(0.0, V_MIN - v)
    cost += TEB_W_VEL * float((over * over + under * under).sum())
    dth = ths[1:] - ths[:-1]
    dth = np.arctan2(np.sin(dth), np.cos(dth))
    w = dth / dts
    overw = np.maximum(0.0, np.abs(w) - W_MAX)
    cost += TEB_W_VEL * float((overw * overw).sum())
    lat = -s * dx + c * dy
    cost += TEB_W_KIN * float((lat * lat).sum())
    return cost


def _band_cost_grads(xs, ys, ths, dts, points):
    n = len(xs)
    gx = np.zeros(n)
    gy = np.zeros(n)
    gth = np.zeros(n)
    gdt = np.ones(n - 1)
    cost = float(dts.sum())

    if len(points):
        ddx = xs[:, None] - points[None, :, 0]
        ddy = ys[:, None] - points[None, :, 1]
        d = np.hypot(ddx, ddy)
        h = np.maximum(0.0, TEB_SAFE_DIST - d)
        cost += TEB_W_OBST * float((h * h).sum())
        coef = -2.0 * TEB_W_OBST * h / np.maximum(d, 1e-9)
        gx += (coef * ddx).sum(axis=1)
        gy += (coef * ddy).sum(axis=1)

    dx = xs[1:] - xs[:-1]
    dy = ys[1:] - ys[:-1]
    c = np.cos(ths[:-1])
    s = np.sin(ths[:-1])

    v = (c * dx + s * dy) / dts
    over = np.maximum(0.0, v - V_MAX)
    under = np.maximum(0.0, V_MIN - v)
    cost += TEB_W_VEL * float((over * over + under * under).sum())
    gv = 2.0 * TEB_W_VEL * (over - under)
    gx[1:] += gv * c / dts
    gx[:-1] -= gv * c / dts
    gy[1:] += gv * s / dts
    gy[:-1] -= gv * s / dts
    gth[:-1] += gv * (-s * dx + c * dy) / dts
    gdt -= gv * v / dts

    dth = ths[1:] - ths[:-1]
    dth = np.arctan2(np.sin(dth), np.cos(dth))
    w = dth / dts
    overw = np.maximum(0.0, np.abs(w) - W_MAX)
    cost += TEB_W_VEL * float((overw * overw).sum())
    gw = 2.0 * TEB_W_VEL * overw * np.sign(w)
    gth[1:] += gw / dts
    gth[:-1] -= gw / dts
    gdt -= gw * w / dts

    lat = -s * dx + c * dy
    cost += TEB_W_KIN * float((lat * lat).sum())
    gl = 2.0 * TEB_W_KIN * lat
    gx[1:] += gl * -s
    gx[:-1] -= gl * -s
    gy[1:] += gl * c
    gy[:-1] -= gl * c
    gth[:-1] += gl * (-c * dx - s * dy)

    # Endpoints are pinned to the robot and the subgoal.
    for g in (gx, gy, gth):
        g[0] = 0.0
        g[-1] = 0.0
    return cost, gx, gy, gth, gdt


def optimize_band(xs, ys, ths, dts, points, iters: int = TEB_ITERS):
    """Projected gradient descent with backtracking; the accepted step is
    remembered (and regrown) across iterations, so the cost sequence is
    non-increasing by construction. Once every halving is rejected the
    iterate is a fixed point and further iterations would repeat it."""
    costs = [_band_cost(xs, ys, ths, dts, points)]
    step = TEB_STEP
    for _ in range(iters):
        cost, gx, gy, gth, gdt = _band_cost_grads(xs, ys, ths, dts, points)
        step = min(2.0 * step, TEB_STEP)
        moved = False
        for _ in range(12):
            nxs = xs - step * gx
            nys = ys - step * gy
            nths = np.arctan2(np.sin(ths - step * gth), np.cos(ths - step * gth))
            ndts = np.clip(dts - step * gdt, TEB_MIN_DT, TEB_MAX_DT)
            nc = _band_cost(nxs, nys, nths, ndts, points)
            if nc <= cost:
                xs, ys, ths, dts = nxs, nys, nths, ndts
                costs.append(nc)
                moved = True
                break
            step *= 0.5
        if not moved:
            costs.append(cost)
            break
    return xs, ys, ths, dts, costs


def teb_trigger(inp: PlannerInput) -> VelocityCommand:
    """Optimize a 15-pose band toward the subgoal and return the average
    velocity over its first TEB_CONTROL_ARC metres. Averaging over a chunk
    instead of the first segment alone keeps the command meaningful when
    optimization collapses the leading segment to near-zero length. A
    subgoal on top of the robot degenerates to rotating toward its heading."""
    if inp.robot.distance_to(inp.subgoal) < TEB_DEGENERATE_DIST:
        werr = normalize_angle(inp.subgoal.theta - inp.robot.theta)
        return VelocityCommand(0.0, 2.0 * werr)
    xs, ys, ths, dts = _init_band(inp)
    points = scan_points(inp.sensor_scan, limit=TEB_OBST_CUTOFF,
                         subsample=TEB_OBST_SUBSAMPLE)
    xs, ys, ths, dts, _ = optimize_band(xs, ys, ths, dts, points)
    arc = np.cumsum(np.hypot(xs[1:] - xs[:-1], ys[1:] - ys[:-1]))
    j = min(int(np.searchsorted(arc, TEB_CONTROL_ARC)) + 1, len(xs) - 1)
    dt_cum = float(dts[:j].sum())
    v = ((math.cos(ths[0]) * (xs[j] - xs[0])
          + math.sin(ths[0]) * (ys[j] - ys[0])) / dt_cum)
    w = normalize_angle(ths[j] - ths[0]) / dt_cum
    return VelocityCommand(v, w)


@dataclass
class ReactivePolicy:
    """Greedy discrete policy over 9 (v, w) commands."""

    params: dict | None = None

    @classmethod
    def init(cls, rng: np.random.Generator) -> "ReactivePolicy":
        return cls(nets.init_reactive_params(rng))

    @classmethod
    def from_checkpoint(cls, path) -> "ReactivePolicy":
        params = nets.load_checkpoint(path)
        expected = nets.param_shapes(
            nets.init_reactive_params(np.random.default_rng(0)))
        sub = {k: v for k, v in params.items() if k.startswith("reactive.")}
        for name, shape in expected.items():
            if name not in sub:
                raise nets.CheckpointError(f"{path}: missing tensor {name}")
            if tuple(sub[name].shape) != shape:
                raise nets.CheckpointError(
                    f"{path}: {name} shape {sub[name].shape} != {shape}")
        return cls(sub)

    def act_greedy(self, scan_ds: np.ndarray, feats: np.ndarray) -> int:
        if self.params is None:
            raise PolicyNotLoaded("reactive policy has no parameters")
        logits, _ = nets.forward_reactive(
            self.params, scan_ds[None, :], feats[None, :])
        return int(np.argmax(logits[0]))


def reactive_observation(inp: PlannerInput) -> tuple[np.ndarray, np.ndarray]:
    return (downsample_scan(inp.sensor_scan),
            polar_features(inp.robot, inp.subgoal))


def drl_trigger(policy: ReactivePolicy, inp: PlannerInput) -> VelocityCommand:
    if policy is None or policy.params is None:
        raise PolicyNotLoaded("reactive policy has no parameters")
    scan_ds, feats = reactive_observation(inp)
    action = policy.act_greedy(scan_ds, feats)
    return VelocityCommand(*REACTIVE_COMMANDS[action])


class DwaPlanner:
    name = "dwa"

    def __init__(self):
        self.calls = 0

    def trigger(self, inp: PlannerInput) -> VelocityCommand:
        self.calls += 1
        return dwa_trigger(inp)

    def reset(self) -> None:
        pass


class TebPlanner:
    name = "teb"

    def __init__(self):
        self.calls = 0

    def trigger(self, inp: PlannerInput) -> VelocityCommand:
        self.calls += 1
        return teb_trigger(inp)

    def reset(self) -> None:
        pass


class DrlPlanner:
    name = "drl"

    def __init__(self, policy: ReactivePolicy):
        self.policy = policy
        self.calls = 0

    def trigger(self, inp: PlannerInput) -> VelocityCommand:
        self.calls += 1
        return drl_trigger(self.policy, inp)

    def reset(self) -> None:
        pass


@dataclass
class PlannerRegistry:
    """Fixed ordered set of planner services with per-call wall-clock
    accounting (the computation-time metric)."""

    planners: list
    ids: list[PlannerId] = field(init=False)
    call_counts: list[int] = field(init=False)
    total_ms: list[float] = field(init=False)

    def __post_init__(self):
        if not self.planners:
            raise ValueError("registry needs at least one planner")
        self.ids = [PlannerId(i, p.name) for i, p in enumerate(self.planners)]
        self.call_counts = [0] * len(self.planners)
        self.total_ms = [0.0] * len(self.planners)

    def __len__(self) -> int:
        return len(self.planners)

    def trigger_by_id(self, index: int, inp: PlannerInput) -> VelocityCommand:
        if not 0 <= index < len(self.planners):
            raise UnknownId(f"planner id {index} of {len(self.planners)}")
        t0 = time.perf_counter()
        cmd = self.planners[index].trigger(inp)
        self.total_ms[index] += (time.perf_counter() - t0) * 1e3
        self.call_counts[index] += 1
        return cmd

    def mean_ms(self) -> dict[str, float]:
        return {p.name: (self.total_ms[i] / self.call_counts[i]
                         if self.call_counts[i] else 0.0)
                for i, p in enumerate(self.planners)}

    def reset(self) -> None:
        for p in self.planners:
            p.reset()


def aio_registry(policy: ReactivePolicy) -> PlannerRegistry:
    """The switchable set: elastic-band optimizer and learned policy."""
    return PlannerRegistry([TebPlanner(), DrlPlanner(policy)])
