import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import constant_map
from oracles import reference_run
from voa.costmap import CostMap, costs_at, generate_random
from voa.engine import CostQuery, voa_relocation
from voa.geometry import PlannedPath, step_array
from voa.simulator import (
    AecdEstimate,
    SimConfig,
    empirical_cost_of_trace,
    estimate_aecd,
    paired_runs,
    simulate_batch,
    simulate_run,
    stream_seed,
    trace_times,
)
from voa.uncertainty import CovarianceModel

PATH = PlannedPath.straight((5.5, 10.5), (13.5, 10.5))


def test_noiseless_run_follows_plan(small_map):
    trace, cost = simulate_run(small_map, PATH, SimConfig(delta_sigma_true=0.0), 1)
    assert np.array_equal(trace.positions, step_array(PATH))
    assert cost == pytest.approx(float(costs_at(small_map, step_array(PATH)).sum()))


def test_runs_are_deterministic(small_map):
    cfg = SimConfig(0.2)
    a = simulate_run(small_map, PATH, cfg, 42, (4, "localization"))
    b = simulate_run(small_map, PATH, cfg, 42, (4, "localization"))
    assert a[0] == b[0] and a[1] == b[1]


@pytest.mark.parametrize("assist", ["relocation", "localization"])
def test_single_runs_pair_through_l(small_map, assist):
    cfg = SimConfig(0.2)
    u, _ = simulate_run(small_map, PATH, cfg, 9)
    a, _ = simulate_run(small_map, PATH, cfg, 9, (5, assist))
    assert np.array_equal(u.positions[:5], a.positions[:5])
    if assist == "relocation":
        assert np.array_equal(a.positions[5], step_array(PATH)[5])
    else:
        # localization starts its correction from the agent's true position at l
        assert np.array_equal(a.positions[5], u.positions[5])


def test_step_noise_covariance():
    path = PlannedPath.straight((0.5, 50.5), (100.5, 50.5))
    batch = simulate_batch(CostMap(np.zeros((2, 2))), path, 0.2, None, "relocation", 100, 3)
    resid = np.diff(batch.unassisted_positions, axis=1) - np.diff(step_array(path), axis=0)
    cov = np.cov(resid.reshape(-1, 2).T)
    assert np.allclose(cov, 0.2 * np.eye(2), atol=0.01)


@pytest.mark.parametrize("assist", ["relocation", "localization"])
def test_batch_matches_loop_reference(small_map, assist):
    seed = stream_seed(5, 2, 3)
    batch = simulate_batch(small_map, PATH, 0.3, 3, assist, 40, seed)
    for r in (0, 13, 39):
        u, a = reference_run(PATH, 0.3, 3, assist, 40, stream_seed(5, 2, 3), r)
        assert np.allclose(batch.unassisted_positions[r], u, rtol=0, atol=1e-12)
        assert np.allclose(batch.assisted_positions[r], a, rtol=0, atol=1e-12)
        assert batch.assisted_costs[r] == pytest.approx(float(costs_at(small_map, a).sum()), abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 7), st.sampled_from(["relocation", "localization"]), st.integers(0, 2**31))
def test_paired_prefix_identical(l, assist, seed):
    cmap = generate_random(0, 20, 20, smoothing=1.5)
    batch = paired_runs(cmap, PATH, SimConfig(0.2, seed, 20, assist), l)
    for u, a in zip(batch.unassisted_positions, batch.assisted_positions):
        assert u[:l].tobytes() == a[:l].tobytes()


def test_localization_visits_corrective_points(small_map):
    batch = simulate_batch(small_map, PATH, 0.2, 6, "localization", 200, 1)
    m = PATH.step_count
    for pos, n in zip(batch.assisted_positions, batch.correction_steps):
        assert len(pos) == m + 1 + n


def test_zero_noise_aecd_is_zero(small_map):
    est = estimate_aecd(small_map, PATH, SimConfig(0.0, runs_per_waypoint=50), 4)
    assert est.mean == 0.0 and est.std == 0.0 and est.n == 50


def test_constant_map_relocation_aecd():
    est = estimate_aecd(constant_map(0.5), PlannedPath.straight((10.5, 20.5), (30.5, 20.5)),
                        SimConfig(0.2, runs_per_waypoint=500), 10)
    assert abs(est.mean) <= est.ci99_halfwidth + 1e-12


def test_aecd_statistics():
    est = AecdEstimate.from_differences(np.array([1.0, 2.0, 3.0, 4.0]))
    assert est.mean == 2.5
    assert est.std == pytest.approx(np.std([1, 2, 3, 4], ddof=1))
    assert est.ci99_halfwidth == pytest.approx(2.576 * est.std / 2)


def test_intervention_bounds(small_map):
    with pytest.raises(ValueError):
        paired_runs(small_map, PATH, SimConfig(), 0)
    with pytest.raises(ValueError):
        paired_runs(small_map, PATH, SimConfig(), PATH.step_count)


def test_trace_times():
    t = trace_times(PATH, 3, 2, speed=2.0)
    assert np.allclose(t, [0, 0.5, 1, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0])


def test_empirical_cost_of_trace():
    cmap = CostMap(np.array([[0.1, 0.2, 0.3]]))
    from voa.geometry import ExecutedTrace
    trace = ExecutedTrace([0, 1, 2], [[0.5, 0.5], [1.5, 0.5], [2.5, 0.5]])
    assert empirical_cost_of_trace(trace, cmap) == pytest.approx(0.6)
    assert empirical_cost_of_trace(ExecutedTrace([0, 1], [[50, 50], [60, 60]]), cmap) == 0.0


def test_perfect_trace_equals_noiseless_expectation(small_map):
    from voa.engine import expected_cost
    trace, cost = simulate_run(small_map, PATH, SimConfig(0.0), 0)
    q = CostQuery(small_map, PATH, CovarianceModel(0.0))
    assert empirical_cost_of_trace(trace, small_map) == pytest.approx(expected_cost(q))


def test_aecd_within_one_std_of_relocation_voa():
    cmap = generate_random(17, 100, 100)
    path = PlannedPath.straight((20.5, 50.5), (85.5, 50.5))
    q = CostQuery(cmap, path, CovarianceModel(0.2))
    for l in (16, 32, 48):
        est = estimate_aecd(cmap, path, SimConfig(0.2, 1, 1000), l, map_id=3)
        assert abs(voa_relocation(q, l / path.step_count).voa - est.mean) <= est.std
