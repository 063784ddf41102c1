"""Procedural indoor/outdoor occupancy grids with difficulty scaling, plus
start/goal/obstacle spawning for episodes."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .sim_core import DynamicObstacle, Pose2D

MAP_SIZE_M = 20.0
RESOLUTION = 0.05
BORDER_CELLS = 2
WALL_CELLS = 3

MAX_DIFFICULTY = 5
MIN_SEPARATION = 6.0
OBSTACLE_START_CLEARANCE = 1.0

# Non-lethal spawn clearance: just outside the 0.3 m lethal inflation band.
SPAWN_CLEARANCE = 0.32


class GenerationFailed(Exception):
    pass


class SpawnFailed(Exception):
    pass


def indoor_corridor_width(difficulty: int) -> float:
    return max(1.2 - 0.15 * difficulty, 0.6)


def outdoor_blob_radius(difficulty: int) -> float:
    return 0.3 + 0.15 * difficulty


@dataclass
class OccupancyGrid:
    """Binary occupancy raster; True cells are occupied. Row r, col c maps to
    the world square [c*res, (c+1)*res) x [r*res, (r+1)*res)."""

    cells: np.ndarray
    resolution: float = RESOLUTION
    seed: int = 0
    _edt: np.ndarray | None = field(default=None, repr=False, compare=False)
    _clear_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def size_m(self) -> tuple[float, float]:
        return self.width * self.resolution, self.height * self.resolution

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        return int(math.floor(y / self.resolution)), int(math.floor(x / self.resolution))

    def cell_center(self, r: int, c: int) -> tuple[float, float]:
        return (c + 0.5) * self.resolution, (r + 0.5) * self.resolution

    def in_bounds_cell(self, r: int, c: int) -> bool:
        return 0 <= r < self.height and 0 <= c < self.width

    def is_occupied_cell(self, r: int, c: int) -> bool:
        return bool(self.cells[r, c])

    def edt(self) -> np.ndarray:
        """Distance (m) from each cell center to the nearest occupied cell."""
        if self._edt is None:
            self._edt = ndimage.distance_transform_edt(
                ~self.cells, sampling=self.resolution)
        return self._edt

    def clearance_at(self, x: float, y: float) -> float:
        r, c = self.world_to_cell(x, y)
        if not self.in_bounds_cell(r, c):
            return 0.0
        return float(self.edt()[r, c])

    def cells_with_clearance(self, clearance: float) -> np.ndarray:
        """(N, 2) array of (row, col) whose clearance is >= the given value."""
        key = round(clearance, 6)
        if key not in self._clear_cache:
            rs, cs = np.nonzero(self.edt() >= clearance)
            self._clear_cache[key] = np.stack([rs, cs], axis=1)
        return self._clear_cache[key]

    def free_mask(self) -> np.ndarray:
        return ~self.cells

    def validate(self) -> None:
        """Check the structural invariants: occupied border, one dominant
        free component (>= 60% of free cells)."""
        border = np.concatenate([
            self.cells[0], self.cells[-1], self.cells[:, 0], self.cells[:, -1]])
        if not border.all():
            raise ValueError("grid border must be fully occupied")
        labels, n = ndimage.label(self.free_mask())
        if n == 0:
            raise ValueError("grid has no free space")
        sizes = ndimage.sum_labels(np.ones_like(labels), labels, range(1, n + 1))
        if sizes.max() < 0.6 * self.free_mask().sum():
            raise ValueError("largest free component below 60% of free space")


def free_space_connected(cells: np.ndarray) -> bool:
    _, n = ndimage.label(~cells)
    return n == 1


def _empty_arena(n_cells: int, seed: int) -> np.ndarray:
    cells = np.zeros((n_cells, n_cells), dtype=bool)
    cells[:BORDER_CELLS, :] = True
    cells[-BORDER_CELLS:, :] = True
    cells[:, :BORDER_CELLS] = True
    cells[:, -BORDER_CELLS:] = True
    return cells


def _carve_rooms(cells: np.ndarray, r0: int, r1: int, c0: int, c1: int,
                 door_cells: int, rng: np.random.Generator) -> None:
    """Recursively split the free region [r0:r1, c0:c1] with walls, carving
    one door per wall. Guarantees connectivity by induction."""
    h, w = r1 - r0, c1 - c0
    min_side = door_cells + 2 * WALL_CELLS + 8
    max_side = 110  # keep splitting rooms larger than ~5.5 m
    if max(h, w) <= max_side and rng.random() < 0.4:
        return
    if max(h, w) < 2 * min_side + WALL_CELLS:
        return

    split_vertical = w > h if w != h else bool(rng.integers(0, 2))
    if split_vertical:
        lo, hi = c0 + min_side, c1 - min_side - WALL_CELLS
        if lo >= hi:
            return
        p = int(rng.integers(lo, hi))
        cells[r0:r1, p:p + WALL_CELLS] = True
        d0 = int(rng.integers(r0, r1 - door_cells + 1))
        cells[d0:d0 + door_cells, p:p + WALL_CELLS] = False
        _carve_rooms(cells, r0, r1, c0, p, door_cells, rng)
        _carve_rooms(cells, r0, r1, p + WALL_CELLS, c1, door_cells, rng)
    else:
        lo, hi = r0 + min_side, r1 - min_side - WALL_CELLS
        if lo >= hi:
            return
        p = int(rng.integers(lo, hi))
        cells[p:p + WALL_CELLS, c0:c1] = True
        d0 = int(rng.integers(c0, c1 - door_cells + 1))
        cells[p:p + WALL_CELLS, d0:d0 + door_cells] = False
        _carve_rooms(cells, r0, p, c0, c1, door_cells, rng)
        _carve_rooms(cells, p + WALL_CELLS, r1, c0, c1, door_cells, rng)


def generate_indoor(seed: int, difficulty: int) -> OccupancyGrid:
    """Office-style layout of rooms and door openings; opening width shrinks
    with difficulty."""
    if not 0 <= difficulty <= MAX_DIFFICULTY:
        raise ValueError(f"difficulty must be in [0, {MAX_DIFFICULTY}]")
    n = int(round(MAP_SIZE_M / RESOLUTION))
    door_cells = int(round(indoor_corridor_width(difficulty) / RESOLUTION))
    for attempt in range(100):
        rng = np.random.default_rng((seed, difficulty, attempt))
        cells = _empty_arena(n, seed)
        _carve_rooms(cells, BORDER_CELLS, n - BORDER_CELLS,
                     BORDER_CELLS, n - BORDER_CELLS, door_cells, rng)
        if free_space_connected(cells):
            return OccupancyGrid(cells=cells, resolution=RESOLUTION, seed=seed)
    raise GenerationFailed(f"indoor map (seed={seed}, difficulty={difficulty})")


def generate_outdoor(seed: int, difficulty: int,
                     n_blobs: int | None = None) -> OccupancyGrid:
    """Open arena with randomly placed convex blobs that grow with
    difficulty."""
    if not 0 <= difficulty <= MAX_DIFFICULTY:
        raise ValueError(f"difficulty must be in [0, {MAX_DIFFICULTY}]")
    n = int(round(MAP_SIZE_M / RESOLUTION))
    if n_blobs is None:
        n_blobs = 8
    base_r = outdoor_blob_radius(difficulty)
    yy, xx = np.mgrid[0:n, 0:n]
    cx_m = (xx + 0.5) * RESOLUTION
    cy_m = (yy + 0.5) * RESOLUTION

    for attempt in range(100):
        rng = np.random.default_rng((seed, difficulty, attempt))
        cells = _empty_arena(n, seed)
        placed: list[tuple[float, float, float]] = []
        ok = True
        for _ in range(n_blobs):
            for _ in range(50):
                r = base_r * rng.uniform(0.8, 1.25)
                margin = r + 0.8
                x = rng.uniform(margin, MAP_SIZE_M - margin)
                y = rng.uniform(margin, MAP_SIZE_M - margin)
                if all(math.hypot(x - px, y - py) >= r + pr + 0.7
                       for px, py, pr in placed):
                    placed.append((x, y, r))
                    break
            else:
                ok = False
                break
        if not ok:
            continue
        for x, y, r in placed:
            cells |= (cx_m - x) ** 2 + (cy_m - y) ** 2 <= r ** 2
        if free_space_connected(cells):
            return OccupancyGrid(cells=cells, resolution=RESOLUTION, seed=seed)
    raise GenerationFailed(f"outdoor map (seed={seed}, difficulty={difficulty})")


@dataclass
class ScenarioConfig:
    map_kind: str  # "indoor" | "outdoor"
    difficulty: int = 0
    n_obstacles: int = 0
    obstacle_speed: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.map_kind not in ("indoor", "outdoor"):
            raise ValueError(f"unknown map kind {self.map_kind!r}")
        if not 0 <= self.difficulty <= MAX_DIFFICULTY:
            raise ValueError("difficulty out of curriculum range")
        if not 0 <= self.n_obstacles <= 50:
            raise ValueError("n_obstacles must be in [0, 50]")


def generate_map(config: ScenarioConfig) -> OccupancyGrid:
    if config.map_kind == "indoor":
        return generate_indoor(config.seed, config.difficulty)
    return generate_outdoor(config.seed, config.difficulty)


def _pose_from_cell(grid: OccupancyGrid, r: int, c: int, theta: float = 0.0) -> Pose2D:
    x, y = grid.cell_center(r, c)
    return Pose2D(x, y, theta)


def spawn_episode(grid: OccupancyGrid, config: ScenarioConfig
                  ) -> tuple[Pose2D, Pose2D, list[DynamicObstacle]]:
    """Place start, goal (>= 6 m apart where the map allows, mutually
    reachable) and the scenario's dynamic obstacles."""
    rng = np.random.default_rng((config.seed, 0xA10))
    candidates = grid.cells_with_clearance(SPAWN_CLEARANCE)
    if len(candidates) < 2:
        raise SpawnFailed("no spawnable free space")

    # 4-connected labels over non-lethal space match global-planner
    # reachability (diagonal moves require both orthogonal neighbours free).
    nonlethal = grid.edt() > 0.3
    labels, _ = ndimage.label(nonlethal)

    best: tuple[float, Pose2D, Pose2D] | None = None
    start = goal = None
    for _ in range(100):
        i, j = rng.integers(0, len(candidates), size=2)
        (r0, c0), (r1, c1) = candidates[i], candidates[j]
        if labels[r0, c0] != labels[r1, c1]:
            continue
        s = _pose_from_cell(grid, r0, c0,
                            theta=rng.uniform(-math.pi, math.pi))
        g = _pose_from_cell(grid, r1, c1)
        sep = s.distance_to(g)
        if best is None or sep > best[0]:
            best = (sep, s, g)
        if sep >= MIN_SEPARATION:
            start, goal = s, g
            break
    if start is None:
        if best is None:
            raise SpawnFailed("no mutually reachable start/goal pair")
        _, start, goal = best

    obstacles: list[DynamicObstacle] = []
    for _ in range(config.n_obstacles):
        radius = float(rng.uniform(0.1, 0.2))
        spots = grid.cells_with_clearance(radius)
        for _ in range(100):
            k = rng.integers(0, len(spots))
            x, y = grid.cell_center(*spots[k])
            if math.hypot(x - start.x, y - start.y) >= OBSTACLE_START_CLEARANCE:
                wk = rng.integers(0, len(spots))
                wx, wy = grid.cell_center(*spots[wk])
                obstacles.append(DynamicObstacle(
                    x=x, y=y, radius=radius, speed=config.obstacle_speed,
                    waypoint=(wx, wy)))
                break
        else:
            raise SpawnFailed("could not place obstacle away from start")
    return start, goal, obstacles


def save_grid(grid: OccupancyGrid, path) -> None:
    """JSON with width/height/resolution/seed header and a row-major
    run-length-encoded occupancy string (alternating free,occupied runs)."""
    flat = grid.cells.ravel()
    runs = []
    current = False  # RLE starts with a free run by convention
    count = 0
    for v in flat:
        if bool(v) == current:
            count += 1
        else:
            runs.append(count)
            current = not current
            count = 1
    runs.append(count)
    doc = {
        "width": grid.width,
        "height": grid.height,
        "resolution": grid.resolution,
        "seed": grid.seed,
        "rle": ",".join(str(r) for r in runs),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def load_grid(path) -> OccupancyGrid:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    runs = [int(tok) for tok in doc["rle"].split(",")]
    flat = np.zeros(doc["width"] * doc["height"], dtype=bool)
    pos = 0
    occupied = False
    for run in runs:
        if occupied:
            flat[pos:pos + run] = True
        pos += run
        occupied = not occupied
    if pos != flat.size:
        raise ValueError(f"RLE length {pos} does not match grid size {flat.size}")
    cells = flat.reshape(doc["height"], doc["width"])
    return OccupancyGrid(cells=cells, resolution=float(doc["resolution"]),
                         seed=int(doc["seed"]))
