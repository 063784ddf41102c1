"""Global planning: costmap inflation, grid Dijkstra, subgoal sampling from
the path, and the 1 Hz replanning schedule."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse import csgraph

from .map_gen import OccupancyGrid
from .sim_core import Pose2D

LETHAL_RADIUS = 0.3
DECAY_WIDTH = 0.2
# Decay constant: cost 1 at the lethal boundary, under 0.01 at 0.5 m.
DECAY_K = math.log(100.0) / DECAY_WIDTH

SUBGOAL_LOOKAHEAD = 1.5
REPLAN_PERIOD = 1.0

# 8-connected moves as (dr, dc, step length factor).
_MOVES = [(-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
          (-1, -1, math.sqrt(2)), (-1, 1, math.sqrt(2)),
          (1, -1, math.sqrt(2)), (1, 1, math.sqrt(2))]


class NoPath(Exception):
    pass


class InvalidEndpoint(Exception):
    pass


@dataclass
class Costmap:
    """Inflated view of a static grid: a lethal disc around every occupied
    cell plus an exponentially decaying cost band."""

    base: OccupancyGrid
    lethal: np.ndarray
    cost: np.ndarray
    lethal_radius: float = LETHAL_RADIUS
    decay_width: float = DECAY_WIDTH

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape


def inflate(grid: OccupancyGrid, lethal_radius: float = LETHAL_RADIUS,
            decay_width: float = DECAY_WIDTH) -> Costmap:
    d = grid.edt()
    lethal = d <= lethal_radius
    cost = np.zeros_like(d)
    band = ~lethal & (d < lethal_radius + decay_width)
    cost[band] = np.exp(-DECAY_K * (d[band] - lethal_radius))
    cost[lethal] = 1.0
    return Costmap(base=grid, lethal=lethal, cost=cost,
                   lethal_radius=lethal_radius, decay_width=decay_width)


@dataclass
class GlobalPath:
    """Dense cell-center path; waypoint headings follow the path tangent."""

    waypoints: list[Pose2D]
    length: float
    created_at: float = 0.0
    cost: float = 0.0
    _xy: np.ndarray = field(default=None, repr=False, compare=False)
    _cum: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._xy is None:
            self._xy = np.array([[p.x, p.y] for p in self.waypoints])
        if self._cum is None:
            seg = np.linalg.norm(np.diff(self._xy, axis=0), axis=1)
            self._cum = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def goal(self) -> Pose2D:
        return self.waypoints[-1]

    def project(self, x: float, y: float) -> tuple[float, float]:
        """Nearest point on the path: (arc length, lateral distance).
        Ties resolve to the smallest arc length."""
        p = np.array([x, y])
        if len(self.waypoints) == 1:
            return 0.0, float(np.linalg.norm(self._xy[0] - p))
        a = self._xy[:-1]
        b = self._xy[1:]
        ab = b - a
        denom = np.maximum((ab * ab).sum(axis=1), 1e-12)
        t = np.clip(((p - a) * ab).sum(axis=1) / denom, 0.0, 1.0)
        closest = a + t[:, None] * ab
        d = np.linalg.norm(closest - p, axis=1)
        i = int(np.argmin(d))
        s = self._cum[i] + t[i] * math.sqrt(denom[i])
        return float(s), float(d[i])

    def point_at(self, s: float) -> Pose2D:
        """Pose at arc length s (clamped); heading = segment tangent."""
        if len(self.waypoints) == 1 or s <= 0:
            return self.waypoints[0].copy()
        if s >= self.length:
            return self.waypoints[-1].copy()
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        i = min(i, len(self.waypoints) - 2)
        seg = self._cum[i + 1] - self._cum[i]
        t = (s - self._cum[i]) / max(seg, 1e-12)
        x = self._xy[i, 0] + t * (self._xy[i + 1, 0] - self._xy[i, 0])
        y = self._xy[i, 1] + t * (self._xy[i + 1, 1] - self._xy[i, 1])
        theta = math.atan2(self._xy[i + 1, 1] - self._xy[i, 1],
                           self._xy[i + 1, 0] - self._xy[i, 0])
        return Pose2D(x, y, theta)

    def lateral_distance(self, x: float, y: float) -> float:
        return self.project(x, y)[1]


def _cells_to_path(grid: OccupancyGrid, cells: list[tuple[int, int]],
                   created_at: float, cost: float = 0.0) -> GlobalPath:
    pts = [grid.cell_center(r, c) for r, c in cells]
    poses = []
    for i, (x, y) in enumerate(pts):
        if i + 1 < len(pts):
            theta = math.atan2(pts[i + 1][1] - y, pts[i + 1][0] - x)
        elif i > 0:
            theta = poses[-1].theta
        else:
            theta = 0.0
        poses.append(Pose2D(x, y, theta))
    length = sum(math.hypot(pts[i + 1][0] - pts[i][0], pts[i + 1][1] - pts[i][1])
                 for i in range(len(pts) - 1))
    return GlobalPath(waypoints=poses, length=length, created_at=created_at,
                      cost=cost)


def _endpoint_cell(costmap: Costmap, pose: Pose2D, label: str) -> tuple[int, int]:
    r, c = costmap.base.world_to_cell(pose.x, pose.y)
    if not costmap.base.in_bounds_cell(r, c):
        raise InvalidEndpoint(f"{label} ({pose.x:.2f}, {pose.y:.2f}) out of bounds")
    if costmap.lethal[r, c]:
        raise InvalidEndpoint(f"{label} ({pose.x:.2f}, {pose.y:.2f}) in lethal cell")
    return r, c


def plan(costmap: Costmap, start: Pose2D, goal: Pose2D,
         created_at: float = 0.0) -> GlobalPath:
    """Minimum-cost 8-connected path on the inflated grid.

    Edge cost = euclidean step x (1 + cost of the target cell); diagonal
    moves require both orthogonal neighbours non-lethal (no corner cutting).
    Tie-breaking is lexicographic on (cost, cell index) so the relaxation
    order is fully deterministic.
    """
    grid = costmap.base
    h, w = costmap.shape
    res = grid.resolution
    sr, sc = _endpoint_cell(costmap, start, "start")
    gr, gc = _endpoint_cell(costmap, goal, "goal")
    s_idx = sr * w + sc
    g_idx = gr * w + gc
    if s_idx == g_idx:
        return _cells_to_path(grid, [(sr, sc)], created_at)

    lethal = costmap.lethal
    cost = costmap.cost
    dist = np.full(h * w, np.inf)
    parent = np.full(h * w, -1, dtype=np.int64)
    dist[s_idx] = 0.0
    heap = [(0.0, s_idx)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        if u == g_idx:
            break
        ur, uc = divmod(u, w)
        for dr, dc, step in _MOVES:
            vr, vc = ur + dr, uc + dc
            if not (0 <= vr < h and 0 <= vc < w) or lethal[vr, vc]:
                continue
            if dr != 0 and dc != 0 and (lethal[ur, vc] or lethal[vr, uc]):
                continue
            v = vr * w + vc
            nd = d + step * res * (1.0 + cost[vr, vc])
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, v))
    if not np.isfinite(dist[g_idx]):
        raise NoPath(f"goal ({goal.x:.2f}, {goal.y:.2f}) unreachable")

    cells = []
    u = g_idx
    while u != -1:
        cells.append(divmod(u, w))
        u = parent[u]
    cells.reverse()
    return _cells_to_path(grid, cells, created_at, cost=float(dist[g_idx]))


class GoalField:
    """Goal-rooted Dijkstra over the whole non-lethal grid, built once per
    episode so each 1 Hz replan is a predecessor walk instead of a search.

    Uses the same edge costs and corner rule as plan(); paths may differ
    from plan() only in cost ties.
    """

    def __init__(self, costmap: Costmap, goal: Pose2D):
        self.costmap = costmap
        self.goal = goal.copy()
        grid = costmap.base
        h, w = costmap.shape
        self._gr, self._gc = _endpoint_cell(costmap, goal, "goal")
        free = ~costmap.lethal
        res = grid.resolution
        mult = 1.0 + costmap.cost

        rows_all = []
        cols_all = []
        w_all = []
        rr, cc = np.mgrid[0:h, 0:w]
        for dr, dc, step in _MOVES:
            vr = rr + dr
            vc = cc + dc
            ok = (vr >= 0) & (vr < h) & (vc >= 0) & (vc < w) & free
            vr_c = np.clip(vr, 0, h - 1)
            vc_c = np.clip(vc, 0, w - 1)
            ok &= free[vr_c, vc_c]
            if dr != 0 and dc != 0:
                ok &= free[rr, vc_c] & free[vr_c, cc]
            u = (rr * w + cc)[ok]
            v = (vr_c * w + vc_c)[ok]
            # Reversed edges: dijkstra from the goal over v->u then equals
            # the forward u->v search toward the goal.
            rows_all.append(v)
            cols_all.append(u)
            w_all.append(step * res * mult[vr_c, vc_c][ok])
        mat = coo_matrix(
            (np.concatenate(w_all),
             (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(h * w, h * w)).tocsr()
        g_idx = self._gr * w + self._gc
        dist, pred = csgraph.dijkstra(
            mat, directed=True, indices=g_idx, return_predecessors=True)
        self.dist = dist
        self.pred = pred
        self._w = w

    def reachable(self, pose: Pose2D) -> bool:
        grid = self.costmap.base
        r, c = grid.world_to_cell(pose.x, pose.y)
        if not grid.in_bounds_cell(r, c) or self.costmap.lethal[r, c]:
            return False
        return bool(np.isfinite(self.dist[r * self._w + c]))

    def path_from(self, start: Pose2D, created_at: float = 0.0) -> GlobalPath:
        u = _endpoint_cell(self.costmap, start, "start")
        idx = u[0] * self._w + u[1]
        if not np.isfinite(self.dist[idx]):
            raise NoPath(f"start ({start.x:.2f}, {start.y:.2f}) cut off from goal")
        cells = [u]
        g_idx = self._gr * self._w + self._gc
        start_cost = float(self.dist[idx])
        while idx != g_idx:
            idx = int(self.pred[idx])
            cells.append(divmod(idx, self._w))
        return _cells_to_path(self.costmap.base, cells, created_at,
                              cost=start_cost)


def sample_subgoal(path: GlobalPath, robot: Pose2D,
                   lookahead: float = SUBGOAL_LOOKAHEAD) -> Pose2D:
    """Path point a fixed arc length ahead of the robot's projection,
    clamped to the final goal."""
    s, _ = path.project(robot.x, robot.y)
    return path.point_at(s + lookahead)


def maybe_replan(clock: float, last_plan: float) -> bool:
    return clock - last_plan >= REPLAN_PERIOD - 1e-9
