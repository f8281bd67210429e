"""Recorded trajectory ingestion and empirical AECD.

Traces are CSV files with a ``t,x,y`` header (seconds, meters). A JSON
manifest lists ``{"file": ..., "label": ...}`` entries where the label is
``unassisted`` or ``assisted@<step>``; ``<step>`` indexes the planned step
grid ``w_0..w_m`` at which assistance was given.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .costmap import CostMap, costs_at
from .geometry import ExecutedTrace, PlannedPath, resample_to_steps
from .simulator import Z99, AecdEstimate

_LABEL = re.compile(r"^assisted@(\d+)$")

COSTING_MODES = ("steps", "all")


class TraceFormatError(ValueError):
    pass


@dataclass
class TraceSet:
    path: PlannedPath
    unassisted: list[ExecutedTrace] = field(default_factory=list)
    assisted: dict[int, list[ExecutedTrace]] = field(default_factory=dict)

    def __post_init__(self):
        m = self.path.step_count
        for k in self.assisted:
            if not 0 <= k <= m:
                raise ValueError(f"assistance step {k} outside the path's step grid 0..{m}")
        for t in self.unassisted + [t for group in self.assisted.values() for t in group]:
            if len(t) == 0:
                raise ValueError("empty trace in trace set")


def read_trace_csv(path: str | Path) -> ExecutedTrace:
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceFormatError(f"{path}: empty file")
        if [h.strip() for h in header] != ["t", "x", "y"]:
            raise TraceFormatError(f"{path}:1: expected header 't,x,y', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise TraceFormatError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                values = [float(c) for c in row]
            except ValueError:
                raise TraceFormatError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
            if not all(math.isfinite(v) for v in values):
                raise TraceFormatError(f"{path}:{lineno}: non-finite value in {row!r}")
            rows.append(values)
    if not rows:
        raise TraceFormatError(f"{path}: no samples")
    data = np.array(rows)
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    if np.any(np.diff(data[:, 0]) <= 0):
        raise TraceFormatError(f"{path}: duplicate timestamps")
    return ExecutedTrace(data[:, 0], data[:, 1:])


def write_trace_csv(trace: ExecutedTrace, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y"])
        for t, (x, y) in zip(trace.times, trace.positions):
            writer.writerow([repr(float(t)), repr(float(x)), repr(float(y))])


def parse_label(label: str) -> int | None:
    """``None`` for unassisted traces, the assistance step otherwise."""
    if label == "unassisted":
        return None
    match = _LABEL.match(label)
    if match is None:
        raise TraceFormatError(f"unknown trace label {label!r}")
    return int(match.group(1))


def load_traces(directory: str | Path, manifest: str | Path | list, path: PlannedPath) -> TraceSet:
    """Load every trace listed in ``manifest``; file names resolve against ``directory``."""
    directory = Path(directory)
    if not isinstance(manifest, list):
        with open(manifest, encoding="utf-8") as fh:
            manifest = json.load(fh)
    if not isinstance(manifest, list):
        raise TraceFormatError("manifest must be a JSON list of {file, label} objects")
    traces = TraceSet(path)
    for i, entry in enumerate(manifest):
        try:
            fname, label = entry["file"], entry["label"]
        except (TypeError, KeyError):
            raise TraceFormatError(f"manifest entry {i} lacks 'file' or 'label'") from None
        step = parse_label(label)
        trace = read_trace_csv(directory / fname)
        if step is None:
            traces.unassisted.append(trace)
        else:
            traces.assisted.setdefault(step, []).append(trace)
    TraceSet.__post_init__(traces)
    return traces


def export_traces(directory: str | Path, unassisted: list[ExecutedTrace],
                  assisted: dict[int, list[ExecutedTrace]]) -> Path:
    """Write traces plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i, t in enumerate(unassisted):
        name = f"unassisted_{i:05d}.csv"
        write_trace_csv(t, directory / name)
        manifest.append({"file": name, "label": "unassisted"})
    for step, group in sorted(assisted.items()):
        for i, t in enumerate(group):
            name = f"assisted_{step:04d}_{i:05d}.csv"
            write_trace_csv(t, directory / name)
            manifest.append({"file": name, "label": f"assisted@{step}"})
    out = directory / "manifest.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return out


def trace_cost(trace: ExecutedTrace, cmap: CostMap, path: PlannedPath, mode: str = "steps",
               fill: float = 0.0, speed: float | None = None) -> float:
    """Executed cost of a recorded trace.

    ``steps`` resamples the trace to the planned step grid by nearest time
    before summing; ``all`` sums the cost under every recorded sample.
    """
    if mode == "steps":
        positions = resample_to_steps(trace, path, speed)
    elif mode == "all":
        positions = trace.positions
    else:
        raise ValueError(f"unknown costing mode {mode!r}; expected one of {COSTING_MODES}")
    return float(costs_at(cmap, positions, fill).sum())


def empirical_aecd(traces: TraceSet, cmap: CostMap, l: int, mode: str = "steps",
                   fill: float = 0.0, speed: float | None = None) -> AecdEstimate:
    """Unassisted minus assisted mean cost from two independent groups of traces.

    ``std`` is the standard deviation of a single unassisted-minus-assisted
    difference, ``sqrt(s_u^2 + s_a^2)``; ``ci99_halfwidth`` uses the Welch
    standard error and ``n`` is the total number of traces used.
    """
    group = traces.assisted.get(l)
    if not traces.unassisted or not group:
        raise ValueError(f"need unassisted traces and traces assisted at step {l}")
    cu = np.array([trace_cost(t, cmap, traces.path, mode, fill, speed) for t in traces.unassisted])
    ca = np.array([trace_cost(t, cmap, traces.path, mode, fill, speed) for t in group])
    var_u = float(np.var(cu, ddof=1)) if len(cu) > 1 else 0.0
    var_a = float(np.var(ca, ddof=1)) if len(ca) > 1 else 0.0
    se = math.sqrt(var_u / len(cu) + var_a / len(ca))
    return AecdEstimate(float(np.mean(cu) - np.mean(ca)), math.sqrt(var_u + var_a), Z99 * se,
                        len(cu) + len(ca))
