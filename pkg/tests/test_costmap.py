import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from voa import costmap
from voa.costmap import CostMap, cost_at, costs_at, generate_random, window_at
from voa.geometry import Waypoint


def grid(h=5, w=5):
    return CostMap(np.arange(h * w).reshape(h, w) / (h * w))


def test_values_in_range():
    with pytest.raises(ValueError):
        CostMap(np.array([[0.5, 1.5]]))
    with pytest.raises(ValueError):
        CostMap(np.array([[-0.1]]))


def test_generation_is_deterministic():
    assert generate_random(3, 30, 20) == generate_random(3, 30, 20)
    assert generate_random(3, 30, 20) != generate_random(4, 30, 20)


def test_no_smoothing_gives_raw_uniform():
    m = generate_random(5, 50, 50, smoothing=0)
    assert np.array_equal(m.values, np.random.default_rng(5).random((50, 50)))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_smoothed_mean_near_half(seed):
    m = generate_random(seed, 100, 100, smoothing=5)
    assert 0.4 <= m.values.mean() <= 0.6
    # values spread over nearly the whole unit interval
    assert m.values.min() < 0.01 and m.values.max() > 0.99


@given(st.integers(0, 2**32 - 1), st.floats(0, 4))
def test_generated_values_in_unit_interval(seed, smoothing):
    m = generate_random(seed, 12, 9, smoothing=smoothing)
    assert m.values.shape == (9, 12)
    assert m.values.min() >= 0 and m.values.max() <= 1


def test_window_interior():
    m = grid()
    win = window_at(m, Waypoint(2.5, 2.5), 3)
    assert np.array_equal(win.values, m.values[1:4, 1:4])


def test_window_corner_fill():
    m = CostMap(np.full((5, 5), 0.5))
    win = window_at(m, Waypoint(0.5, 0.5), 3, fill=0.0)
    assert np.count_nonzero(win.values) == 4
    assert win.values.sum() == pytest.approx(2.0)


def test_window_outside_map():
    win = window_at(grid(), Waypoint(-50, 80), 4, fill=0.25)
    assert np.all(win.values == 0.25)


def test_cost_at_cell_center_and_edge():
    m = grid()
    assert cost_at(m, Waypoint(1.5, 3.5)) == m.values[3, 1]
    # floor convention: the shared edge x=2 belongs to column 2
    assert cost_at(m, Waypoint(2.0, 0.5)) == m.values[0, 2]


def test_cost_at_outside():
    assert cost_at(grid(), Waypoint(-0.1, 1.0)) == 0.0
    assert cost_at(grid(), Waypoint(9.0, 1.0), fill=0.7) == 0.7


def test_costs_at_matches_scalar():
    m = grid()
    pts = np.array([[0.5, 0.5], [4.99, 4.99], [5.0, 1.0], [2.2, 3.7]])
    assert np.array_equal(costs_at(m, pts), [cost_at(m, Waypoint(*p)) for p in pts])


def test_cell_size_and_origin():
    m = CostMap(np.array([[0.1, 0.2], [0.3, 0.4]]), cell_size=2.0, origin=Waypoint(10, 10))
    assert cost_at(m, Waypoint(13.9, 11.0)) == 0.2
    assert cost_at(m, Waypoint(11.0, 12.0)) == 0.3


def test_save_load_round_trip(tmp_path):
    m = generate_random(9, 17, 13)
    costmap.save(m, tmp_path / "m.json")
    assert costmap.load(tmp_path / "m.json") == m


def test_load_rejects_out_of_range(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text(json.dumps({"width": 2, "height": 1, "cell_size": 1, "origin": [0, 0], "values": [[0.2, 1.5]]}))
    with pytest.raises(ValueError, match="range|\\[0, 1\\]"):
        costmap.load(f)


def test_load_rejects_ragged(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text(json.dumps({"width": 2, "height": 2, "cell_size": 1, "origin": [0, 0],
                             "values": [[0.2, 0.1], [0.3]]}))
    with pytest.raises(ValueError):
        costmap.load(f)
