"""Shared fixtures: small worlds and episodes reused across test modules,
plus the terminal summary that replays acceptance verdict lines."""

import numpy as np
import pytest

from aionav.map_gen import OccupancyGrid, RESOLUTION, ScenarioConfig
from aionav.nav_env import EpisodeSetup, build_episode
from aionav.sim_core import Pose2D, VelocityCommand, WorldState

VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    """Replay the acceptance gate verdicts after the test summary, where
    output capture cannot swallow them."""
    if VERDICTS:
        terminalreporter.section("acceptance gate")
        for line in VERDICTS:
            terminalreporter.write_line(line)


def open_grid(n: int = 100) -> OccupancyGrid:
    """Free square arena with only the border occupied."""
    cells = np.zeros((n, n), dtype=bool)
    cells[:2, :] = cells[-2:, :] = True
    cells[:, :2] = cells[:, -2:] = True
    return OccupancyGrid(cells=cells, resolution=RESOLUTION)


def world_in(grid: OccupancyGrid, x: float, y: float, theta: float = 0.0,
             obstacles=None, goal=None) -> WorldState:
    if goal is None:
        goal = Pose2D(grid.size_m[0] / 2, grid.size_m[1] / 2)
    return WorldState(robot=Pose2D(x, y, theta), velocity=VelocityCommand(),
                      obstacles=list(obstacles or []), static_grid=grid,
                      goal=goal, rng_seed=0)


@pytest.fixture(scope="session")
def arena() -> OccupancyGrid:
    return open_grid()


@pytest.fixture(scope="session")
def outdoor_setup() -> EpisodeSetup:
    return build_episode(ScenarioConfig(map_kind="outdoor", difficulty=1,
                                        n_obstacles=6, seed=100))


@pytest.fixture(scope="session")
def indoor_setup() -> EpisodeSetup:
    return build_episode(ScenarioConfig(map_kind="indoor", difficulty=2,
                                        n_obstacles=8, seed=100))
