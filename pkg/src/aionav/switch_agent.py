"""The control switch: observation assembly from the scan decomposition and
goal geometry, and 2 Hz planner selection from the actor-critic network."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import nets
from .scan_model import LaserScan, ScanPair
from .sim_core import Pose2D, normalize_angle

GOAL_DIST_SCALE = 20.0


class SelectMode(enum.Enum):
    Greedy = "greedy"
    Sample = "sample"


@dataclass
class SwitchObservation:
    dynamic_scan_ds: np.ndarray
    static_scan_ds: np.ndarray
    goal_polar: np.ndarray
    subgoal_polar: np.ndarray

    @property
    def feats(self) -> np.ndarray:
        return np.concatenate([self.goal_polar, self.subgoal_polar])


@dataclass
class SwitchDecision:
    planner: int
    logits: np.ndarray
    value: float
    sampled: bool


def downsample_scan(scan: LaserScan, n_out: int = nets.SCAN_DS) -> np.ndarray:
    """Per-group minimum downsampling (a close return is never hidden),
    normalized by max_range + 1 so the sentinel maps to 1.0."""
    group = scan.n_beams // n_out
    if group * n_out != scan.n_beams:
        raise ValueError(f"{scan.n_beams} beams not divisible into {n_out}")
    mins = scan.ranges.reshape(n_out, group).min(axis=1)
    return mins / (scan.max_range + 1.0)


def polar_features(robot: Pose2D, target: Pose2D,
                   dist_scale: float = GOAL_DIST_SCALE) -> np.ndarray:
    """(clamped distance / scale, bearing / pi) in the robot frame."""
    d = robot.distance_to(target)
    bearing = 0.0
    if d > 0:
        bearing = normalize_angle(
            math.atan2(target.y - robot.y, target.x - robot.x) - robot.theta)
    return np.array([min(d, dist_scale) / dist_scale, bearing / math.pi])


def build_observation(pair: ScanPair, robot: Pose2D, goal: Pose2D,
                      subgoal: Pose2D) -> SwitchObservation:
    return SwitchObservation(
        dynamic_scan_ds=downsample_scan(pair.dynamic_scan),
        static_scan_ds=downsample_scan(pair.static_scan),
        goal_polar=polar_features(robot, goal),
        subgoal_polar=polar_features(robot, subgoal),
    )


def stack_observations(observations: list[SwitchObservation]) -> tuple:
    dyn = np.stack([o.dynamic_scan_ds for o in observations])
    static = np.stack([o.static_scan_ds for o in observations])
    feats = np.stack([o.feats for o in observations])
    return dyn, static, feats


def select(params: dict, obs: SwitchObservation, mode: SelectMode,
           rng: np.random.Generator | None = None) -> SwitchDecision:
    """One switch decision. Greedy takes the argmax (lowest index on ties);
    Sample draws from the softmax distribution."""
    dyn, static, feats = stack_observations([obs])
    logits, values = nets.forward_switch(params, dyn, static, feats)
    logits = logits[0]
    value = float(values[0])
    if mode is SelectMode.Greedy:
        planner = int(np.argmax(logits))
        return SwitchDecision(planner, logits, value, sampled=False)
    if rng is None:
        raise ValueError("Sample mode needs an rng")
    probs = nets.softmax(logits)
    planner = int(rng.choice(len(probs), p=probs))
    return SwitchDecision(planner, logits, value, sampled=True)


@dataclass
class SwitchPolicy:
    """Parameter bundle for the switch network."""

    params: dict
    n_actions: int

    @classmethod
    def init(cls, rng: np.random.Generator, n_actions: int) -> "SwitchPolicy":
        return cls(nets.init_switch_params(rng, n_actions), n_actions)

    @classmethod
    def from_checkpoint(cls, path) -> "SwitchPolicy":
        params = nets.load_checkpoint(path)
        key = "switch.pi.b3"
        if key not in params:
            raise nets.CheckpointError(f"{path}: no switch tensors")
        n_actions = int(params[key].shape[0])
        expected = nets.param_shapes(
            nets.init_switch_params(np.random.default_rng(0), n_actions))
        switch_params = {k: v for k, v in params.items()
                         if k.startswith("switch.")}
        for name, shape in expected.items():
            if name not in switch_params:
                raise nets.CheckpointError(f"{path}: missing tensor {name}")
            if tuple(switch_params[name].shape) != shape:
                raise nets.CheckpointError(
                    f"{path}: {name} shape {switch_params[name].shape} != {shape}")
        return cls(switch_params, n_actions)

    def decide(self, obs: SwitchObservation, mode: SelectMode = SelectMode.Greedy,
               rng: np.random.Generator | None = None) -> SwitchDecision:
        return select(self.params, obs, mode, rng)
