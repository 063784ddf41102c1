"""Per-step and terminal reward terms. The total is always the plain sum of
the named components."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .global_planner import GlobalPath
from .scan_model import LaserScan
from .sim_core import EpisodeOutcome, Pose2D

APPROACH_GAIN = 0.25
RETREAT_GAIN = 0.5
SAFE_DIST = 0.18
SAFE_PENALTY = -0.1
PLAN_CORRIDOR = 0.5
PLAN_BONUS = 0.03

TERMINAL_REWARDS = {
    EpisodeOutcome.GoalReached: 3.0,
    EpisodeOutcome.MaxIterations: 0.0,
    EpisodeOutcome.Collision: -2.0,
}


@dataclass
class RewardBreakdown:
    collision: float = 0.0
    goal_reached: float = 0.0
    global_plan: float = 0.0
    approaching_goal: float = 0.0
    safe_dist: float = 0.0

    @property
    def total(self) -> float:
        return (self.collision + self.goal_reached + self.global_plan
                + self.approaching_goal + self.safe_dist)

    def add(self, other: "RewardBreakdown") -> "RewardBreakdown":
        return RewardBreakdown(
            self.collision + other.collision,
            self.goal_reached + other.goal_reached,
            self.global_plan + other.global_plan,
            self.approaching_goal + other.approaching_goal,
            self.safe_dist + other.safe_dist,
        )


def reward_step(prev_robot: Pose2D, curr_robot: Pose2D, subgoal: Pose2D,
                safety_scan: LaserScan, global_path: GlobalPath | None
                ) -> RewardBreakdown:
    """Non-terminal shaping: progress toward the held subgoal (backward
    motion costs twice the forward rate), a proximity penalty, and a small
    bonus for staying inside the global-plan corridor."""
    delta = prev_robot.distance_to(subgoal) - curr_robot.distance_to(subgoal)
    approaching = APPROACH_GAIN * delta if delta >= 0 else RETREAT_GAIN * delta
    safe = SAFE_PENALTY if float(np.min(safety_scan.ranges)) < SAFE_DIST else 0.0
    plan = 0.0
    if global_path is not None:
        if global_path.lateral_distance(curr_robot.x, curr_robot.y) < PLAN_CORRIDOR:
            plan = PLAN_BONUS
    return RewardBreakdown(global_plan=plan, approaching_goal=approaching,
                           safe_dist=safe)


def reward_terminal(outcome: EpisodeOutcome) -> float:
    return TERMINAL_REWARDS[outcome]


def with_terminal(breakdown: RewardBreakdown,
                  outcome: EpisodeOutcome) -> RewardBreakdown:
    r = reward_terminal(outcome)
    if outcome is EpisodeOutcome.Collision:
        return breakdown.add(RewardBreakdown(collision=r))
    if outcome is EpisodeOutcome.GoalReached:
        return breakdown.add(RewardBreakdown(goal_reached=r))
    return breakdown
