import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voa.geometry import (
    ExecutedTrace,
    PlannedPath,
    Waypoint,
    load_path,
    nearest_natural,
    point_at,
    progress_of_trace,
    resample_to_steps,
    save_path,
    step_array,
    step_points,
)

coords = st.floats(-100, 100, allow_nan=False)


def _has_length(points):
    return any(abs(a[0] - b[0]) + abs(a[1] - b[1]) > 1e-3 for a, b in zip(points, points[1:]))


polylines = st.lists(st.tuples(coords, coords), min_size=2, max_size=6).filter(_has_length)


def test_point_at_endpoints_and_midpoint():
    path = PlannedPath.straight((0, 0), (10, 0))
    assert point_at(path, 0.0) == Waypoint(0, 0)
    assert point_at(path, 0.5) == Waypoint(5, 0)
    assert point_at(path, 1.0) == Waypoint(10, 0)


def test_point_at_two_segments():
    path = PlannedPath.from_points([(0, 0), (4, 0), (4, 4)])
    p = point_at(path, 0.75)
    assert p.x == pytest.approx(4.0) and p.y == pytest.approx(2.0)


def test_point_at_rejects_out_of_range():
    path = PlannedPath.straight((0, 0), (10, 0))
    with pytest.raises(ValueError):
        point_at(path, 1.5)


@given(polylines, st.floats(0, 1))
def test_point_at_is_continuous_and_on_path(points, tau):
    path = PlannedPath.from_points(points)
    p = point_at(path, tau)
    # covered arc length equals tau * L, so distance from start is bounded by it
    assert p.distance_to(point_at(path, 0.0)) <= tau * path.total_length + 1e-6
    q = point_at(path, min(1.0, tau + 1e-9))
    assert p.distance_to(q) <= 1e-9 * path.total_length + 1e-6


def test_step_points_unit_spacing():
    pts = step_points(PlannedPath.straight((0, 0), (10, 0)))
    assert len(pts) == 11
    assert all(a.distance_to(b) == pytest.approx(1.0) for a, b in zip(pts, pts[1:]))


def test_step_points_rounding():
    path = PlannedPath.straight((0, 0), (10.4, 0))
    pts = step_points(path)
    assert path.step_count == 10 and len(pts) == 11
    assert pts[1].x == pytest.approx(1.04)


def test_diagonal_step_count():
    d = 70.7 / np.sqrt(2)
    assert PlannedPath.straight((0, 0), (d, d)).step_count == 71


def test_nearest_natural_half_rounds_up():
    assert nearest_natural(2.5) == 3
    assert nearest_natural(0.2) == 0
    assert PlannedPath.straight((0, 0), (0.2, 0)).step_count == 1


@given(polylines)
def test_step_points_span_path(points):
    path = PlannedPath.from_points(points)
    arr = step_array(path)
    assert len(arr) == path.step_count + 1
    assert np.allclose(arr[0], points[0]) and np.allclose(arr[-1], points[-1])


def test_zero_length_path_rejected():
    with pytest.raises(ValueError):
        PlannedPath.straight((1, 1), (1, 1))


def test_progress_of_perfect_trace():
    path = PlannedPath.straight((0, 0), (10, 0))
    trace = ExecutedTrace(np.arange(11.0), step_array(path))
    taus = [t for t, _ in progress_of_trace(trace, path)]
    assert np.allclose(taus, np.arange(11) / 10)


def test_progress_single_sample():
    path = PlannedPath.straight((0, 0), (10, 0))
    trace = ExecutedTrace([3.0], [[1.0, 1.0]])
    assert progress_of_trace(trace, path)[0][0] == 0.0


def test_progress_oversampled():
    path = PlannedPath.straight((0, 0), (10, 0))
    times = np.arange(21) * 0.5
    trace = ExecutedTrace(times, np.column_stack([times, np.zeros(21)]))
    taus = [t for t, _ in progress_of_trace(trace, path)]
    assert np.allclose(taus, np.arange(21) / 20)


@settings(max_examples=50)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=30, unique=True))
def test_progress_monotone_in_unit_interval(times):
    times = np.sort(times)
    path = PlannedPath.straight((0, 0), (10, 0))
    trace = ExecutedTrace(times, np.zeros((len(times), 2)))
    taus = np.array([t for t, _ in progress_of_trace(trace, path)])
    assert np.all(np.diff(taus) >= 0) and taus.min() >= 0 and taus.max() <= 1


def test_trace_rejects_non_increasing_times():
    with pytest.raises(ValueError):
        ExecutedTrace([0.0, 0.0], [[0, 0], [1, 1]])


def test_resample_picks_nearest_time():
    path = PlannedPath.straight((0, 0), (2, 0))
    times = np.array([0.0, 0.4, 1.1, 2.0])
    pos = np.column_stack([times, np.zeros(4)])
    out = resample_to_steps(ExecutedTrace(times, pos), path, speed=1.0)
    assert np.allclose(out[:, 0], [0.0, 1.1, 2.0])


def test_path_round_trip(tmp_path):
    path = PlannedPath.from_points([(0, 0), (3.25, 1), (7, -2)])
    save_path(path, tmp_path / "p.json")
    assert load_path(tmp_path / "p.json") == path
    assert json.loads((tmp_path / "p.json").read_text())["waypoints"][1] == [3.25, 1.0]


def test_waypoint_rejects_nan():
    with pytest.raises(ValueError):
        Waypoint(float("nan"), 0.0)
