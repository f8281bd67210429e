import json

import numpy as np
import pytest

from voa.costmap import CostMap, generate_random
from voa.geometry import ExecutedTrace, PlannedPath, step_array
from voa.simulator import SimConfig, batch_traces, estimate_aecd, paired_runs
from voa.traces import (
    TraceFormatError,
    TraceSet,
    empirical_aecd,
    export_traces,
    load_traces,
    parse_label,
    read_trace_csv,
    trace_cost,
    write_trace_csv,
)

PATH = PlannedPath.straight((5.5, 10.5), (13.5, 10.5))


def write(tmp_path, name, text):
    (tmp_path / name).write_text(text)
    return tmp_path / name


def test_read_write_round_trip(tmp_path):
    t = ExecutedTrace([0.0, 0.1, 0.35], [[1.0, 2.0], [1.1, 2.05], [1.0 / 3, -4e-9]])
    write_trace_csv(t, tmp_path / "t.csv")
    assert read_trace_csv(tmp_path / "t.csv") == t


def test_unsorted_rows_are_sorted(tmp_path):
    f = write(tmp_path, "t.csv", "t,x,y\n1,1,1\n0,0,0\n")
    assert list(read_trace_csv(f).times) == [0.0, 1.0]


def test_non_numeric_names_file_and_line(tmp_path):
    f = write(tmp_path, "bad.csv", "t,x,y\n0,0,0\n1,abc,0\n")
    with pytest.raises(TraceFormatError, match=r"bad\.csv:3"):
        read_trace_csv(f)


def test_duplicate_timestamps(tmp_path):
    f = write(tmp_path, "dup.csv", "t,x,y\n0,0,0\n1,1,0\n1,2,0\n")
    with pytest.raises(TraceFormatError, match="duplicate"):
        read_trace_csv(f)


def test_bad_header(tmp_path):
    with pytest.raises(TraceFormatError):
        read_trace_csv(write(tmp_path, "h.csv", "time,x,y\n0,0,0\n"))


def test_labels():
    assert parse_label("unassisted") is None
    assert parse_label("assisted@3") == 3
    with pytest.raises(TraceFormatError):
        parse_label("assisted@x")


def test_manifest_counts(tmp_path):
    for name in ("a.csv", "b.csv", "c.csv"):
        write(tmp_path, name, "t,x,y\n0,5.5,10.5\n1,6.5,10.5\n")
    manifest = [{"file": "a.csv", "label": "unassisted"}, {"file": "b.csv", "label": "unassisted"},
                {"file": "c.csv", "label": "assisted@3"}]
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    ts = load_traces(tmp_path, tmp_path / "m.json", PATH)
    assert len(ts.unassisted) == 2 and list(ts.assisted) == [3] and len(ts.assisted[3]) == 1


def test_manifest_step_out_of_range(tmp_path):
    write(tmp_path, "a.csv", "t,x,y\n0,0,0\n")
    with pytest.raises(ValueError):
        load_traces(tmp_path, [{"file": "a.csv", "label": "assisted@99"}], PATH)


def test_identical_groups_give_zero():
    cmap = generate_random(1, 20, 20)
    traces = [ExecutedTrace(np.arange(9.0), step_array(PATH) + 0.1 * i) for i in range(4)]
    ts = TraceSet(PATH, traces, {4: traces})
    assert empirical_aecd(ts, cmap, 4).mean == 0.0


def test_zero_map_gives_zero():
    traces = [ExecutedTrace(np.arange(9.0), step_array(PATH) + 0.3 * i) for i in range(3)]
    ts = TraceSet(PATH, traces, {2: traces[:2]})
    assert empirical_aecd(ts, CostMap(np.zeros((20, 20))), 2).mean == 0.0


def test_costing_modes():
    cmap = CostMap(np.full((20, 20), 0.5))
    times = np.arange(17) * 0.5
    pos = np.column_stack([5.5 + times, np.full(17, 10.5)])
    t = ExecutedTrace(times, pos)
    assert trace_cost(t, cmap, PATH, "steps") == pytest.approx(9 * 0.5)
    assert trace_cost(t, cmap, PATH, "all") == pytest.approx(17 * 0.5)
    with pytest.raises(ValueError):
        trace_cost(t, cmap, PATH, "some")


@pytest.mark.parametrize("assist,mode", [("relocation", "steps"), ("localization", "all")])
def test_exported_traces_reproduce_simulator(tmp_path, assist, mode):
    cmap = generate_random(2, 20, 20, smoothing=1.5)
    cfg = SimConfig(0.2, 4, 300, assist)
    batch = paired_runs(cmap, PATH, cfg, 5)
    unassisted, assisted = batch_traces(batch, PATH)
    manifest = export_traces(tmp_path, unassisted, {5: assisted})
    ts = load_traces(tmp_path, manifest, PATH)
    est = empirical_aecd(ts, cmap, 5, mode)
    assert est.mean == pytest.approx(estimate_aecd(cmap, PATH, cfg, 5).mean, abs=1e-9)
    assert est.n == 600


def test_independent_groups_agree_with_paired():
    cmap = generate_random(3, 20, 20, smoothing=1.5)
    paired = estimate_aecd(cmap, PATH, SimConfig(0.2, 0, 500), 4)
    a = paired_runs(cmap, PATH, SimConfig(0.2, 1, 500), 4)
    b = paired_runs(cmap, PATH, SimConfig(0.2, 2, 500), 4)
    ua, _ = batch_traces(a, PATH)
    _, ab = batch_traces(b, PATH)
    est = empirical_aecd(TraceSet(PATH, ua, {4: ab}), cmap, 4)
    assert abs(est.mean - paired.mean) <= paired.std
