"""Monte Carlo execution of planned paths and paired-run AECD estimates.

Each step moves the agent by its planned displacement plus Gaussian noise
with covariance ``step_length * delta_sigma_true * I2``. An assisted run and
its unassisted partner share the noise of steps ``1..l`` and draw fresh,
independent noise afterwards.

Random streams are keyed by ``(master_seed, map_id, l)``; within a key the
four streams (shared prefix, unassisted suffix, assisted suffix, corrective
steps) are spawned from one :class:`numpy.random.SeedSequence` and run ``r``
reads row ``r`` of each block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .costmap import CostMap, costs_at
from .geometry import ExecutedTrace, PlannedPath, step_array

Z99 = 2.576

_PREFIX, _UNASSISTED, _ASSISTED, _CORRECTIVE = range(4)


@dataclass(frozen=True)
class SimConfig:
    delta_sigma_true: float = 0.2
    master_seed: int = 0
    runs_per_waypoint: int = 1000
    assist_type: str = "relocation"
    fill: float = 0.0
    speed: float = 1.0

    def __post_init__(self):
        if self.runs_per_waypoint < 1:
            raise ValueError("runs_per_waypoint must be at least 1")
        if not self.delta_sigma_true >= 0:
            raise ValueError("delta_sigma_true must be non-negative")
        if self.assist_type not in ("relocation", "localization"):
            raise ValueError(f"unknown assistance type {self.assist_type!r}")
        if not self.speed > 0:
            raise ValueError("speed must be positive")


@dataclass(frozen=True)
class AecdEstimate:
    mean: float
    std: float
    ci99_halfwidth: float
    n: int

    @classmethod
    def from_differences(cls, diffs: np.ndarray) -> "AecdEstimate":
        diffs = np.asarray(diffs, dtype=float)
        n = len(diffs)
        if n == 0:
            raise ValueError("no runs to aggregate")
        mean = float(np.mean(diffs))
        std = float(np.std(diffs, ddof=1)) if n > 1 else 0.0
        return cls(mean, std, Z99 * std / math.sqrt(n), n)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "ci99_halfwidth": self.ci99_halfwidth, "n": self.n}


@dataclass
class PairedBatch:
    """Both branches of a block of paired runs intervening at step ``l``.

    Visited positions are ragged for localization, so each branch keeps a
    flat array of positions plus per-run lengths.
    """

    l: int
    assist: str
    unassisted_positions: np.ndarray
    assisted_positions: list[np.ndarray]
    unassisted_costs: np.ndarray
    assisted_costs: np.ndarray
    correction_steps: np.ndarray

    @property
    def differences(self) -> np.ndarray:
        return self.unassisted_costs - self.assisted_costs

    def __len__(self) -> int:
        return len(self.unassisted_costs)


def stream_seed(master_seed: int, map_id: int, l: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(map_id), int(l)])


def _generators(seed) -> list[np.random.Generator]:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in seed.spawn(4)]


def _walk(start_offset: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Cumulative position errors ``(runs, steps + 1, 2)`` starting from ``start_offset``."""
    out = np.empty((noise.shape[0], noise.shape[1] + 1, 2))
    out[:, 0] = start_offset
    np.cumsum(noise, axis=1, out=out[:, 1:])
    out[:, 1:] += start_offset[:, None] if np.ndim(start_offset) == 2 else start_offset
    return out


def simulate_batch(cmap: CostMap, path: PlannedPath, delta_sigma_true: float, l: int | None,
                   assist: str, runs: int, seed, fill: float = 0.0) -> PairedBatch:
    """Run ``runs`` paired executions; ``l=None`` runs the unassisted branch only."""
    w = step_array(path)
    m = path.step_count
    sd = math.sqrt(path.step_length * delta_sigma_true)
    g_prefix, g_unassisted, g_assisted, g_corrective = _generators(seed)
    split = m if l is None else l
    if not 0 <= split <= m:
        raise ValueError(f"intervention step {l} outside 0..{m}")
    prefix_err = _walk(np.zeros(2), sd * g_prefix.standard_normal((runs, split, 2)))
    suffix_err = _walk(prefix_err[:, -1], sd * g_unassisted.standard_normal((runs, m - split, 2)))
    unassisted = w[None] + np.concatenate([prefix_err, suffix_err[:, 1:]], axis=1)
    unassisted_costs = costs_at(cmap, unassisted, fill).sum(axis=1)
    if l is None:
        return PairedBatch(m, "none", unassisted, [], unassisted_costs, unassisted_costs.copy(),
                           np.zeros(runs, dtype=int))

    head = unassisted[:, :l]
    fresh = sd * g_assisted.standard_normal((runs, m - l, 2))
    if assist == "relocation":
        tail = w[None, l:] + _walk(np.zeros((runs, 2)), fresh)
        assisted = np.concatenate([head, tail], axis=1)
        assisted_costs = costs_at(cmap, assisted, fill).sum(axis=1)
        return PairedBatch(l, assist, unassisted, list(assisted), unassisted_costs, assisted_costs,
                           np.zeros(runs, dtype=int))
    if assist != "localization":
        raise ValueError(f"unknown assistance type {assist!r}")

    actual = unassisted[:, l]
    offset = w[l][None] - actual
    dist = np.hypot(offset[:, 0], offset[:, 1])
    units = np.divide(offset, dist[:, None], out=np.zeros_like(offset), where=dist[:, None] > 0)
    n_corr = np.floor(dist + 0.5).astype(int)
    j_max = int(n_corr.max(initial=0))
    # corrective noise is drawn one step-slab at a time so row r never depends on j_max
    corr_sd = math.sqrt(delta_sigma_true)
    corr = np.empty((runs, j_max + 1, 2))
    corr[:, 0] = actual
    for j in range(1, j_max + 1):
        corr[:, j] = corr[:, j - 1] + units + corr_sd * g_corrective.standard_normal((runs, 2))
    arrival = corr[np.arange(runs), n_corr]
    tail = w[None, l:] + _walk(arrival - w[l], fresh)
    assisted_list, assisted_costs = [], np.empty(runs)
    tail_costs = costs_at(cmap, tail[:, 1:], fill).sum(axis=1)
    head_costs = costs_at(cmap, head, fill).sum(axis=1)
    corr_costs = costs_at(cmap, corr, fill)
    for r in range(runs):
        visited = np.concatenate([head[r], corr[r, :n_corr[r] + 1], tail[r, 1:]])
        assisted_list.append(visited)
        assisted_costs[r] = head_costs[r] + corr_costs[r, :n_corr[r] + 1].sum() + tail_costs[r]
    return PairedBatch(l, assist, unassisted, assisted_list, unassisted_costs, assisted_costs, n_corr)


def trace_times(path: PlannedPath, l: int | None, correction_steps: int, speed: float = 1.0) -> np.ndarray:
    """Timestamps for a visited-position sequence: planned steps, then corrective unit steps."""
    m = path.step_count
    dt = path.step_length / speed
    if l is None or correction_steps == 0:
        return np.arange(m + 1) * dt
    head = np.arange(l + 1) * dt
    corr = head[-1] + np.arange(1, correction_steps + 1) / speed
    tail = corr[-1] + np.arange(1, m - l + 1) * dt
    return np.concatenate([head, corr, tail])


def simulate_run(cmap: CostMap, path: PlannedPath, config: SimConfig, run_seed,
                 intervention: tuple[int, str] | None = None) -> tuple[ExecutedTrace, float]:
    """One execution, unassisted or assisted at ``intervention = (l, assist_type)``.

    Calling with and without an intervention under the same ``run_seed``
    yields a paired run: identical positions through step ``l``.
    """
    l, assist = intervention if intervention is not None else (None, "none")
    batch = simulate_batch(cmap, path, config.delta_sigma_true, l if l is not None else path.step_count,
                           assist if intervention is not None else "relocation", 1, run_seed, config.fill)
    if intervention is None:
        positions, cost = batch.unassisted_positions[0], float(batch.unassisted_costs[0])
        return ExecutedTrace(trace_times(path, None, 0, config.speed), positions), cost
    positions = batch.assisted_positions[0]
    times = trace_times(path, l, int(batch.correction_steps[0]), config.speed)
    return ExecutedTrace(times, positions), float(batch.assisted_costs[0])


def paired_runs(cmap: CostMap, path: PlannedPath, config: SimConfig, l: int, map_id: int = 0) -> PairedBatch:
    m = path.step_count
    if not 1 <= l <= m - 1:
        raise ValueError(f"intervention step must lie in 1..{m - 1}, got {l}")
    return simulate_batch(cmap, path, config.delta_sigma_true, l, config.assist_type,
                          config.runs_per_waypoint, stream_seed(config.master_seed, map_id, l), config.fill)


def estimate_aecd(cmap: CostMap, path: PlannedPath, config: SimConfig, l: int, map_id: int = 0) -> AecdEstimate:
    """Average executed cost difference (unassisted minus assisted) at step ``l``."""
    return AecdEstimate.from_differences(paired_runs(cmap, path, config, l, map_id).differences)


def batch_traces(batch: PairedBatch, path: PlannedPath, speed: float = 1.0
                 ) -> tuple[list[ExecutedTrace], list[ExecutedTrace]]:
    """Unassisted and assisted traces of a simulated batch, ready for export."""
    base = trace_times(path, None, 0, speed)
    unassisted = [ExecutedTrace(base, p) for p in batch.unassisted_positions]
    assisted = [ExecutedTrace(trace_times(path, batch.l, int(n), speed), p)
                for p, n in zip(batch.assisted_positions, batch.correction_steps)]
    return unassisted, assisted


def empirical_cost_of_trace(trace: ExecutedTrace, cmap: CostMap, fill: float = 0.0) -> float:
    return float(costs_at(cmap, trace.positions, fill).sum())
