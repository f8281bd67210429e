"""Planned paths, executed traces and the progress parameterization.

A planned path is a polyline traversed at constant speed, so progress
``tau`` in [0, 1] is the fraction of total arc length covered.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

_TOL = 1e-12


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"waypoint coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def distance_to(self, other: "Waypoint") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def nearest_natural(value: float) -> int:
    """Round to the nearest natural number, ties going up."""
    return int(math.floor(value + 0.5))


@dataclass(frozen=True)
class PlannedPath:
    waypoints: tuple[Waypoint, ...]
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        wps = tuple(w if isinstance(w, Waypoint) else Waypoint(*w) for w in self.waypoints)
        if len(wps) < 2:
            raise ValueError("a planned path needs at least two waypoints")
        object.__setattr__(self, "waypoints", wps)
        pts = np.array([[w.x, w.y] for w in wps])
        seg = np.hypot(*np.diff(pts, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        if cum[-1] <= 0:
            raise ValueError("planned path has zero length")
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]]) -> "PlannedPath":
        return cls(tuple(Waypoint(float(p[0]), float(p[1])) for p in points))

    @classmethod
    def straight(cls, start: Sequence[float], end: Sequence[float]) -> "PlannedPath":
        return cls.from_points([start, end])

    @property
    def total_length(self) -> float:
        return float(self._cum[-1])

    @property
    def step_count(self) -> int:
        return max(1, nearest_natural(self.total_length))

    @property
    def step_length(self) -> float:
        return self.total_length / self.step_count

    def distance_at(self, tau: float) -> float:
        return tau * self.total_length

    def to_dict(self) -> dict:
        return {"waypoints": [[w.x, w.y] for w in self.waypoints]}


def _check_tau(tau: float) -> None:
    if not (-_TOL <= tau <= 1 + _TOL):
        raise ValueError(f"progress tau must lie in [0, 1], got {tau}")


def point_at(path: PlannedPath, tau: float) -> Waypoint:
    """Point reached after covering fraction ``tau`` of the path's arc length."""
    _check_tau(tau)
    tau = min(max(tau, 0.0), 1.0)
    return Waypoint(*_points_at(path, np.array([tau]))[0])


def _points_at(path: PlannedPath, taus: np.ndarray) -> np.ndarray:
    cum = path._cum
    pts = np.array([[w.x, w.y] for w in path.waypoints])
    s = np.asarray(taus, dtype=float) * cum[-1]
    seg = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(cum) - 2)
    seg_len = cum[seg + 1] - cum[seg]
    frac = np.where(seg_len > 0, (s - cum[seg]) / np.where(seg_len > 0, seg_len, 1.0), 0.0)
    out = pts[seg] + frac[:, None] * (pts[seg + 1] - pts[seg])
    # endpoints are returned exactly
    out[taus <= 0] = pts[0]
    out[taus >= 1] = pts[-1]
    return out


def step_points(path: PlannedPath) -> list[Waypoint]:
    """The m + 1 points at tau = k/m, k = 0..m."""
    return [Waypoint(*p) for p in step_array(path)]


def step_array(path: PlannedPath) -> np.ndarray:
    """Step points as an ``(m + 1, 2)`` array."""
    m = path.step_count
    taus = np.array([k / m for k in range(m + 1)])
    return _points_at(path, taus)


def step_vectors(path: PlannedPath) -> np.ndarray:
    """Nominal displacement commands between consecutive step points, shape ``(m, 2)``."""
    return np.diff(step_array(path), axis=0)


@dataclass(frozen=True)
class ExecutedTrace:
    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        p = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if len(t) != len(p):
            raise ValueError("trace times and positions differ in length")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("trace timestamps must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
            raise ValueError("trace contains non-finite values")
        t.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def samples(self) -> list[tuple[float, Waypoint]]:
        return [(float(t), Waypoint(*p)) for t, p in zip(self.times, self.positions)]

    def __eq__(self, other):
        if not isinstance(other, ExecutedTrace):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.positions, other.positions)

    __hash__ = None


def progress_of_trace(trace: ExecutedTrace, path: PlannedPath,
                      speed: float | None = None) -> list[tuple[float, Waypoint]]:
    """Assign a progress value to every sample of a recorded trace.

    Time is mapped to arc length under a nominal constant ``speed``; when no
    speed is given it is inferred so that the trace's duration covers the
    whole path.
    """
    if len(trace) == 0:
        raise ValueError("cannot align an empty trace")
    taus = trace_progress_array(trace, path, speed)
    return [(float(tau), Waypoint(*p)) for tau, p in zip(taus, trace.positions)]


def trace_progress_array(trace: ExecutedTrace, path: PlannedPath,
                         speed: float | None = None) -> np.ndarray:
    if len(trace) == 0:
        raise ValueError("cannot align an empty trace")
    elapsed = trace.times - trace.times[0]
    if speed is None:
        duration = elapsed[-1]
        if duration <= 0:
            return np.zeros(len(trace))
        return np.clip(elapsed / duration, 0.0, 1.0)
    if speed <= 0:
        raise ValueError("nominal speed must be positive")
    return np.clip(elapsed * speed / path.total_length, 0.0, 1.0)


def load_path(path: str | Path) -> PlannedPath:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        points = data["waypoints"]
    except (TypeError, KeyError):
        raise ValueError(f"{path}: expected an object with a 'waypoints' list") from None
    return PlannedPath.from_points(points)


def save_path(planned: PlannedPath, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(planned.to_dict(), fh)


def resample_to_steps(trace: ExecutedTrace, path: PlannedPath,
                      speed: float | None = None) -> np.ndarray:
    """Positions at the planned step grid, picked by nearest timestamp.

    Returns an ``(m + 1, 2)`` array; ties resolve to the earlier sample.
    """
    taus = trace_progress_array(trace, path, speed)
    m = path.step_count
    targets = np.arange(m + 1) / m
    idx = np.searchsorted(taus, targets, side="left")
    idx = np.clip(idx, 0, len(taus) - 1)
    prev = np.clip(idx - 1, 0, len(taus) - 1)
    take_prev = np.abs(taus[prev] - targets) <= np.abs(taus[idx] - targets)
    return trace.positions[np.where(take_prev, prev, idx)]
