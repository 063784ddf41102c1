"""SVG rendering of occupancy grids and episode trajectories, with polyline
segments colored by the planner that was active."""

from __future__ import annotations

from pathlib import Path

from .map_gen import OccupancyGrid, generate_map, spawn_episode

SCALE = 30.0  # px per meter
TILE_GAP = 12
MAX_TILES = 12

PLANNER_COLORS = {
    "teb": "#2ca02c",
    "drl": "#d62728",
    "dwa": "#1f77b4",
}
DEFAULT_COLOR = "#888888"


def _grid_rects(grid: OccupancyGrid, ox: float, oy: float) -> list[str]:
    """Row-wise run-merged rectangles for occupied cells."""
    res = grid.resolution
    h_m = grid.height * res
    out = []
    cells = grid.cells
    for r in range(grid.height):
        row = cells[r]
        c = 0
        w = grid.width
        while c < w:
            if row[c]:
                c0 = c
                while c < w and row[c]:
                    c += 1
                x = ox + c0 * res * SCALE
                y = oy + (h_m - (r + 1) * res) * SCALE
                out.append(
                    f'<rect x="{x:.1f}" y="{y:.1f}" '
                    f'width="{(c - c0) * res * SCALE:.1f}" '
                    f'height="{res * SCALE:.1f}" fill="#222222"/>')
            else:
                c += 1
    return out


def _segments(trajectory) -> list[tuple[int, list]]:
    """Split a (time, pose, planner) trajectory into runs of one planner,
    each seeded with the previous point for visual continuity."""
    segs = []
    cur_pid = None
    cur = []
    for i, (_, pose, pid) in enumerate(trajectory):
        if i == 0:
            cur = [pose]
            continue
        if cur_pid is None:
            cur_pid = pid
        if pid != cur_pid:
            segs.append((cur_pid, cur))
            cur = [cur[-1]]
            cur_pid = pid
        cur.append(pose)
    if len(cur) > 1:
        segs.append((cur_pid if cur_pid is not None else -1, cur))
    return segs


def _traj_elements(record, h_m: float, ox: float, oy: float) -> list[str]:
    out = []
    names = record.planners
    for pid, poses in _segments(record.trajectory):
        name = names[pid] if 0 <= pid < len(names) else "none"
        color = PLANNER_COLORS.get(name, DEFAULT_COLOR)
        pts = " ".join(f"{ox + p.x * SCALE:.2f},{oy + (h_m - p.y) * SCALE:.2f}"
                       for p in poses)
        out.append(f'<polyline class="planner-{name}" points="{pts}" '
                   f'fill="none" stroke="{color}" stroke-width="2"/>')
    return out


def _markers(grid: OccupancyGrid, scenario, ox: float, oy: float) -> list[str]:
    h_m = grid.height * grid.resolution
    start, goal, _ = spawn_episode(grid, scenario)
    return [
        f'<circle cx="{ox + start.x * SCALE:.1f}" '
        f'cy="{oy + (h_m - start.y) * SCALE:.1f}" r="5" '
        f'fill="#ffffff" stroke="#000000" stroke-width="1.5"/>',
        f'<circle cx="{ox + goal.x * SCALE:.1f}" '
        f'cy="{oy + (h_m - goal.y) * SCALE:.1f}" r="6" '
        f'fill="#ffcc00" stroke="#000000" stroke-width="1.5"/>',
    ]


def _tile(record, ox: float, oy: float) -> tuple[list[str], float]:
    grid = generate_map(record.scenario)
    h_m = grid.height * grid.resolution
    w_px = grid.width * grid.resolution * SCALE
    parts = [f'<rect x="{ox:.1f}" y="{oy:.1f}" width="{w_px:.1f}" '
             f'height="{h_m * SCALE:.1f}" fill="#ffffff" stroke="#000000"/>']
    parts.extend(_grid_rects(grid, ox, oy))
    parts.extend(_markers(grid, record.scenario, ox, oy))
    parts.extend(_traj_elements(record, h_m, ox, oy))
    label = (f"seed {record.scenario.seed} {record.outcome.value} "
             f"{record.path_length:.1f} m")
    parts.append(f'<text x="{ox + 6:.1f}" y="{oy + 16:.1f}" '
                 f'font-family="monospace" font-size="13">{label}</text>')
    return parts, w_px


def _document(body: list[str], width: float, height: float) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{width:.0f}" height="{height:.0f}" '
            f'viewBox="0 0 {width:.0f} {height:.0f}">')
    return "\n".join([head] + body + ["</svg>"]) + "\n"


def render_record(record, path) -> None:
    """One episode on its regenerated map."""
    body, w_px = _tile(record, 0.0, 0.0)
    size = max(w_px, SCALE * 20.0)
    Path(path).write_text(_document(body, size, size), encoding="utf-8")


def render_records(records, path, max_tiles: int = MAX_TILES) -> None:
    """Small-multiple overlay of the first episodes of a battery."""
    shown = records[:max_tiles]
    cols = 3
    tile_px = 20.0 * SCALE
    body = []
    for i, record in enumerate(shown):
        ox = (i % cols) * (tile_px + TILE_GAP)
        oy = (i // cols) * (tile_px + TILE_GAP)
        parts, _ = _tile(record, ox, oy)
        body.extend(parts)
    rows = (len(shown) + cols - 1) // cols
    width = cols * tile_px + (cols - 1) * TILE_GAP
    height = max(rows, 1) * tile_px + (max(rows, 1) - 1) * TILE_GAP
    Path(path).write_text(_document(body, width, height), encoding="utf-8")
