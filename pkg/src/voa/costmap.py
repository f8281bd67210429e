"""Grid cost-maps with values in [0, 1].

Rows index the y axis and columns the x axis. A point belongs to the cell
``floor((p - origin) / cell_size)`` per axis, so a shared edge is owned by
the cell with the larger index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import ndtr

from .geometry import Waypoint


@dataclass(frozen=True)
class CostMap:
    values: np.ndarray
    cell_size: float = 1.0
    origin: Waypoint = Waypoint(0.0, 0.0)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"cost-map values must be a non-empty 2-D grid, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("cost-map values must lie in [0, 1]")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        origin = self.origin if isinstance(self.origin, Waypoint) else Waypoint(*self.origin)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", origin)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def cell_of(self, p: Waypoint) -> tuple[int, int]:
        """(row, col) of the cell containing ``p``; may fall outside the grid."""
        col = math.floor((p.x - self.origin.x) / self.cell_size)
        row = math.floor((p.y - self.origin.y) / self.cell_size)
        return row, col

    def cell_center(self, row: int, col: int) -> Waypoint:
        return Waypoint(self.origin.x + (col + 0.5) * self.cell_size,
                        self.origin.y + (row + 0.5) * self.cell_size)

    def shifted(self, c: float) -> "CostMap":
        return CostMap(self.values + c, self.cell_size, self.origin)

    def __eq__(self, other):
        if not isinstance(other, CostMap):
            return NotImplemented
        return (self.cell_size == other.cell_size and self.origin == other.origin
                and np.array_equal(self.values, other.values))

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "cell_size": self.cell_size,
            "origin": [self.origin.x, self.origin.y],
            "values": self.values.tolist(),
        }


@dataclass(frozen=True)
class MapWindow:
    center: Waypoint
    size: int
    values: np.ndarray


def _smoothed_std(smoothing: float) -> float:
    """Standard deviation of blurred U(0, 1) noise away from the borders."""
    half = int(math.ceil(4 * smoothing)) + 1
    impulse = np.zeros((2 * half + 1, 2 * half + 1))
    impulse[half, half] = 1.0
    kernel = gaussian_filter(impulse, sigma=smoothing, mode="constant")
    return math.sqrt(float(np.sum(kernel ** 2)) / 12.0)


def generate_random(seed: int, width: int = 100, height: int = 100, cell_size: float = 1.0,
                    smoothing: float = 5.0, origin: Waypoint = Waypoint(0.0, 0.0)) -> CostMap:
    """Seeded, spatially correlated random cost-map.

    Uniform noise is blurred with a Gaussian filter of standard deviation
    ``smoothing`` cells, then pushed through the normal CDF matching the
    blurred field's interior variance so cell values stay close to uniform
    on [0, 1]. With ``smoothing=0`` the raw i.i.d. uniform field is returned.
    """
    if width < 1 or height < 1:
        raise ValueError("map dimensions must be positive")
    rng = np.random.default_rng(seed)
    field = rng.random((height, width))
    if smoothing > 0:
        field = gaussian_filter(field, sigma=smoothing, mode="reflect")
        field = ndtr((field - 0.5) / _smoothed_std(smoothing))
    return CostMap(field, cell_size, origin)


def window_at(cmap: CostMap, center: Waypoint, size: int, fill: float = 0.0) -> MapWindow:
    """Square ``size x size`` copy of the map around the cell containing ``center``.

    For even sizes the containing cell sits at index ``size // 2``.
    """
    if size < 1:
        raise ValueError("window size must be at least 1")
    row, col = cmap.cell_of(center)
    half = size // 2
    out = np.full((size, size), float(fill))
    r0, c0 = row - half, col - half
    rs, re = max(r0, 0), min(r0 + size, cmap.height)
    cs, ce = max(c0, 0), min(c0 + size, cmap.width)
    if rs < re and cs < ce:
        out[rs - r0:re - r0, cs - c0:ce - c0] = cmap.values[rs:re, cs:ce]
    return MapWindow(center, size, out)


def cost_at(cmap: CostMap, p: Waypoint, fill: float = 0.0) -> float:
    row, col = cmap.cell_of(p)
    if 0 <= row < cmap.height and 0 <= col < cmap.width:
        return float(cmap.values[row, col])
    return float(fill)


def costs_at(cmap: CostMap, points: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Vectorised :func:`cost_at` over an array of points with trailing axis 2."""
    pts = np.asarray(points, dtype=float)
    col = np.floor((pts[..., 0] - cmap.origin.x) / cmap.cell_size)
    row = np.floor((pts[..., 1] - cmap.origin.y) / cmap.cell_size)
    inside = (row >= 0) & (row < cmap.height) & (col >= 0) & (col < cmap.width)
    r = np.where(inside, row, 0).astype(np.intp)
    c = np.where(inside, col, 0).astype(np.intp)
    return np.where(inside, cmap.values[r, c], float(fill))


def load(path: str | Path) -> CostMap:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        width, height = int(data["width"]), int(data["height"])
        rows = data["values"]
        cell_size = float(data.get("cell_size", 1.0))
        origin = Waypoint(*map(float, data.get("origin", [0.0, 0.0])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed cost-map header ({exc})") from None
    if not isinstance(rows, list) or any(not isinstance(r, list) for r in rows):
        raise ValueError(f"{path}: 'values' must be a list of rows")
    if len(rows) != height or any(len(r) != width for r in rows):
        raise ValueError(f"{path}: values are not a {height}x{width} rectangle")
    return CostMap(np.array(rows, dtype=float), cell_size, origin)


def save(cmap: CostMap, path: str | Path) -> None:
    # json writes floats with repr, which round-trips exactly
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cmap.to_dict(), fh)
