"""Tests for SVG rendering of episode trajectories."""

import pytest

from aionav.eval_harness import EpisodeRecord
from aionav.map_gen import ScenarioConfig
from aionav.render_svg import (DEFAULT_COLOR, MAX_TILES, PLANNER_COLORS,
                               _segments, render_record, render_records)
from aionav.sim_core import EpisodeOutcome, Pose2D


def poses(n):
    return [Pose2D(10.0 + 0.1 * i, 10.0, 0.0) for i in range(n)]


def record_with_pids(pids, seed=100):
    pts = poses(len(pids) + 1)
    trajectory = [(0.0, pts[0], -1)]
    trajectory += [(0.1 * (i + 1), pts[i + 1], pid)
                   for i, pid in enumerate(pids)]
    return EpisodeRecord(
        scenario=ScenarioConfig("outdoor", 0, 2, seed=seed),
        outcome=EpisodeOutcome.GoalReached,
        path_length=1.0,
        duration=0.1 * len(pids),
        collisions=0,
        near_misses=0,
        planners=["teb", "drl"],
        planner_usage={"teb": 0.5, "drl": 0.5},
        planner_calls={"teb": 1, "drl": 1},
        planner_total_ms={"teb": 1.0, "drl": 1.0},
        trajectory=trajectory,
    )


class TestSegments:
    """Trajectory splitting into single-planner runs."""

    def test_runs_split_on_planner_change(self):
        pts = poses(6)
        traj = [(0.0, pts[0], -1), (0.1, pts[1], 0), (0.2, pts[2], 0),
                (0.3, pts[3], 1), (0.4, pts[4], 1), (0.5, pts[5], 0)]
        segs = _segments(traj)
        assert [pid for pid, _ in segs] == [0, 1, 0]
        assert [len(ps) for _, ps in segs] == [3, 3, 2]

    def test_segments_share_boundary_points(self):
        """Consecutive runs overlap by one pose so the line is unbroken."""
        pts = poses(4)
        traj = [(0.0, pts[0], -1), (0.1, pts[1], 0), (0.2, pts[2], 1),
                (0.3, pts[3], 1)]
        segs = _segments(traj)
        first_end = segs[0][1][-1]
        second_start = segs[1][1][0]
        assert (first_end.x, first_end.y) == (second_start.x, second_start.y)

    def test_single_planner_is_one_segment(self):
        pts = poses(4)
        traj = [(0.0, pts[0], -1)] + [(0.1 * i, pts[i], 0)
                                      for i in range(1, 4)]
        segs = _segments(traj)
        assert len(segs) == 1
        assert segs[0][0] == 0
        assert len(segs[0][1]) == 4

    def test_empty_and_single_point_trajectories(self):
        assert _segments([]) == []
        assert _segments([(0.0, poses(1)[0], -1)]) == []


class TestRenderRecord:
    """Single-episode SVG output."""

    def test_planner_colors_present(self, tmp_path):
        record = record_with_pids([0, 0, 1, 1])
        path = tmp_path / "ep.svg"
        render_record(record, path)
        text = path.read_text()
        assert text.startswith("<svg")
        assert text.rstrip().endswith("</svg>")
        assert PLANNER_COLORS["teb"] in text
        assert PLANNER_COLORS["drl"] in text
        assert 'class="planner-teb"' in text
        assert 'class="planner-drl"' in text

    def test_unknown_planner_uses_default_color(self, tmp_path):
        record = record_with_pids([7, 7, 7])
        path = tmp_path / "ep.svg"
        render_record(record, path)
        text = path.read_text()
        assert DEFAULT_COLOR in text
        assert 'class="planner-none"' in text

    def test_render_is_deterministic(self, tmp_path):
        record = record_with_pids([0, 1, 0])
        a = tmp_path / "a.svg"
        b = tmp_path / "b.svg"
        render_record(record, a)
        render_record(record, b)
        assert a.read_bytes() == b.read_bytes()

    def test_label_mentions_seed_and_outcome(self, tmp_path):
        record = record_with_pids([0], seed=321)
        path = tmp_path / "ep.svg"
        render_record(record, path)
        text = path.read_text()
        assert "seed 321" in text
        assert "goal_reached" in text

    def test_occupied_cells_drawn(self, tmp_path):
        """The enclosing walls of the map appear as dark rectangles."""
        record = record_with_pids([0])
        path = tmp_path / "ep.svg"
        render_record(record, path)
        assert 'fill="#222222"' in path.read_text()


class TestRenderRecords:
    """Small-multiple battery overview."""

    def test_one_label_per_tile(self, tmp_path):
        records = [record_with_pids([0, 1], seed=100 + i) for i in range(5)]
        path = tmp_path / "battery.svg"
        render_records(records, path)
        text = path.read_text()
        assert text.count("<text") == 5

    def test_tile_count_capped(self, tmp_path):
        records = [record_with_pids([0], seed=100 + i)
                   for i in range(MAX_TILES + 3)]
        path = tmp_path / "battery.svg"
        render_records(records, path)
        assert path.read_text().count("<text") == MAX_TILES

    def test_start_goal_markers_drawn(self, tmp_path):
        records = [record_with_pids([0])]
        path = tmp_path / "battery.svg"
        render_records(records, path)
        text = path.read_text()
        assert text.count("<circle") == 2
        assert "#ffcc00" in text
