"""Gaussian localization uncertainty: covariance growth and grid discretization.

Covariance grows linearly with distance travelled, ``Sigma(tau) = Sigma0 +
d(tau) * delta_sigma * I``. Cell probabilities are exact: each axis
contributes a difference of normal CDFs over the cell bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .costmap import CostMap
from .geometry import ExecutedTrace, PlannedPath, Waypoint, _check_tau, resample_to_steps, step_vectors


@dataclass(frozen=True)
class CovarianceModel:
    delta_sigma: float
    initial_covariance: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))

    def __post_init__(self):
        if not self.delta_sigma >= 0:
            raise ValueError("delta_sigma must be non-negative")
        cov = np.array(self.initial_covariance, dtype=float).reshape(2, 2)
        if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() < -1e-12:
            raise ValueError("initial covariance must be symmetric positive semi-definite")
        cov.flags.writeable = False
        object.__setattr__(self, "initial_covariance", cov)


def covariance_at(model: CovarianceModel, path: PlannedPath, tau: float) -> np.ndarray:
    _check_tau(tau)
    return model.initial_covariance + path.distance_at(tau) * model.delta_sigma * np.eye(2)


def covariance_after_relocation(model: CovarianceModel, path: PlannedPath,
                                tau_assist: float, t: float) -> np.ndarray:
    """Covariance at progress ``t`` for an agent reset to certainty at ``tau_assist``."""
    _check_tau(tau_assist)
    _check_tau(t)
    if t < tau_assist:
        raise ValueError(f"t={t} precedes the assistance point {tau_assist}")
    if tau_assist == 0:
        return covariance_at(model, path, t)
    return (path.distance_at(t) - path.distance_at(tau_assist)) * model.delta_sigma * np.eye(2)


@dataclass(frozen=True)
class DiscreteKernel:
    masses: np.ndarray
    mean: Waypoint
    covariance: np.ndarray
    center_cell: tuple[int, int]
    cell_size: float
    origin: Waypoint

    @property
    def size(self) -> int:
        return self.masses.shape[0]


def _diagonal_variances(cov) -> tuple[float, float]:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = float(cov) * np.eye(2)
    cov = cov.reshape(2, 2)
    if cov[0, 1] != 0 or cov[1, 0] != 0:
        raise ValueError("only diagonal covariances can be discretized")
    vx, vy = float(cov[0, 0]), float(cov[1, 1])
    if vx < 0 or vy < 0 or not (np.isfinite(vx) and np.isfinite(vy)):
        raise ValueError("covariance diagonal must be finite and non-negative")
    return vx, vy


def axis_masses(means: np.ndarray, variances: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Normal probability of each interval ``[edges[j], edges[j+1])``.

    ``means`` and ``variances`` broadcast over a leading axis; ``edges`` is
    shared (1-D) or given per mean (2-D). The result has shape
    ``(n, n_edges - 1)``. Zero variance puts all mass in the cell whose
    lower edge is at or below the mean.
    """
    mu = np.atleast_1d(np.asarray(means, dtype=float))[:, None]
    var = np.broadcast_to(np.atleast_1d(np.asarray(variances, dtype=float)), mu.shape[:1])[:, None]
    edges = np.asarray(edges, dtype=float)
    if edges.ndim == 1:
        edges = edges[None, :]
    sd = np.sqrt(var)
    safe = np.where(sd > 0, sd, 1.0)
    lo = (edges[:, :-1] - mu) / safe
    hi = (edges[:, 1:] - mu) / safe
    # evaluate the upper tail through the complementary CDF to keep precision
    masses = np.where(lo > 0, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
    point = sd[:, 0] == 0
    if np.any(point):
        e = np.broadcast_to(edges, (len(mu), edges.shape[1]))[point]
        cell_size = e[:, 1] - e[:, 0]
        idx = np.floor((mu[point, 0] - e[:, 0]) / cell_size).astype(np.intp)
        delta = np.zeros((int(point.sum()), edges.shape[1] - 1))
        ok = (idx >= 0) & (idx < edges.shape[1] - 1)
        delta[np.nonzero(ok)[0], idx[ok]] = 1.0
        masses[point] = delta
    return masses


def cell_conditional_means(mean: float, variance: float, edges: np.ndarray) -> np.ndarray:
    """Mean of ``N(mean, variance)`` restricted to each interval of ``edges``.

    Degenerates to ``mean`` itself for zero variance and to the interval
    midpoint where the interval mass underflows.
    """
    mid = 0.5 * (edges[:-1] + edges[1:])
    if variance == 0:
        return np.full(len(mid), float(mean))
    sd = np.sqrt(variance)
    a = (edges[:-1] - mean) / sd
    b = (edges[1:] - mean) / sd
    mass = np.where(a > 0, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))
    dens = np.exp(-0.5 * a ** 2) - np.exp(-0.5 * b ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = mean + sd * dens / (np.sqrt(2 * np.pi) * mass)
    out = np.where(mass > 1e-300, out, mid)
    return np.clip(out, edges[:-1], np.nextafter(edges[1:], -np.inf))


def default_kernel_size(cov, cell_size: float = 1.0) -> int:
    """Smallest odd window spanning at least 12 standard deviations plus a margin cell."""
    vx, vy = _diagonal_variances(cov)
    sd = np.sqrt(max(vx, vy))
    return int(2 * np.ceil(6 * sd / cell_size) + 3)


def discretize(mean: Waypoint, cov, cell_size: float = 1.0, size: int | None = None,
               origin: Waypoint = Waypoint(0.0, 0.0)) -> DiscreteKernel:
    """Discretize ``N(mean, cov)`` onto a square window of grid cells.

    The window is aligned with the grid anchored at ``origin`` and its center
    cell (index ``size // 2``) contains ``mean``.
    """
    vx, vy = _diagonal_variances(cov)
    if size is None:
        size = default_kernel_size(np.diag([vx, vy]), cell_size)
    if size < 1:
        raise ValueError("kernel size must be at least 1")
    col = int(np.floor((mean.x - origin.x) / cell_size))
    row = int(np.floor((mean.y - origin.y) / cell_size))
    half = size // 2
    x_edges = origin.x + (col - half + np.arange(size + 1)) * cell_size
    y_edges = origin.y + (row - half + np.arange(size + 1)) * cell_size
    px = axis_masses(np.array([mean.x]), np.array([vx]), x_edges)[0]
    py = axis_masses(np.array([mean.y]), np.array([vy]), y_edges)[0]
    return DiscreteKernel(np.outer(py, px), mean, np.diag([vx, vy]), (half, half), cell_size, origin)


def kernel_difference(ka: DiscreteKernel, kb: DiscreteKernel) -> np.ndarray:
    if (ka.masses.shape != kb.masses.shape or ka.mean != kb.mean or ka.cell_size != kb.cell_size
            or ka.origin != kb.origin):
        raise ValueError("kernels must share size, mean and grid alignment")
    return ka.masses - kb.masses


# local windows reach this many standard deviations; the dropped tail is ~1e-19
_WINDOW_SIGMAS = 9.0
_CHUNK_CELLS = 4_000_000


def expected_cell_costs(cmap: CostMap, means: np.ndarray, variances, fill: float = 0.0) -> np.ndarray:
    """Expected cell cost of ``N(mean_i, diag(variance_i))`` for each row of ``means``.

    ``variances`` is a scalar, one isotropic variance per mean, or an
    ``(n, 2)`` array of per-axis variances. Probability falling off the map
    is charged ``fill``. Narrow distributions are evaluated on a local
    window of the map, wide ones against the whole grid.
    """
    means = np.asarray(means, dtype=float).reshape(-1, 2)
    if len(means) == 0:
        return np.zeros(0)
    var = np.asarray(variances, dtype=float)
    if var.ndim < 2:
        var = np.broadcast_to(var, (len(means),))[:, None]
    var = np.broadcast_to(var, (len(means), 2))
    half = int(np.ceil(_WINDOW_SIGMAS * np.sqrt(var.max()) / cmap.cell_size)) + 1
    size = 2 * half + 1
    if size * size * 2 >= cmap.width * cmap.height:
        return _expected_whole_map(cmap, means, var, fill)
    out = np.empty(len(means))
    step = max(1, _CHUNK_CELLS // (size * size))
    for i in range(0, len(means), step):
        out[i:i + step] = _expected_local(cmap, means[i:i + step], var[i:i + step], fill, half)
    return out


def _expected_whole_map(cmap: CostMap, means: np.ndarray, var: np.ndarray, fill: float) -> np.ndarray:
    x_edges = cmap.origin.x + np.arange(cmap.width + 1) * cmap.cell_size
    y_edges = cmap.origin.y + np.arange(cmap.height + 1) * cmap.cell_size
    px = axis_masses(means[:, 0], var[:, 0], x_edges)
    py = axis_masses(means[:, 1], var[:, 1], y_edges)
    inner = np.sum((py @ cmap.values) * px, axis=1)
    if fill:
        inner = inner + fill * (1.0 - py.sum(axis=1) * px.sum(axis=1))
    return inner


def _expected_local(cmap: CostMap, means: np.ndarray, var: np.ndarray, fill: float, half: int) -> np.ndarray:
    cs = cmap.cell_size
    size = 2 * half + 1
    col = np.floor((means[:, 0] - cmap.origin.x) / cs).astype(np.intp)
    row = np.floor((means[:, 1] - cmap.origin.y) / cs).astype(np.intp)
    offs = np.arange(size + 1) - half
    x_edges = cmap.origin.x + (col[:, None] + offs[None, :]) * cs
    y_edges = cmap.origin.y + (row[:, None] + offs[None, :]) * cs
    px = axis_masses(means[:, 0], var[:, 0], x_edges)
    py = axis_masses(means[:, 1], var[:, 1], y_edges)
    pad = size
    padded = np.pad(cmap.values, pad, constant_values=float(fill))
    # windows entirely off the padded grid see nothing but fill
    row_c = np.clip(row, -half - 1, cmap.height + half) + pad - half
    col_c = np.clip(col, -half - 1, cmap.width + half) + pad - half
    r_idx = row_c[:, None, None] + np.arange(size)[None, :, None]
    c_idx = col_c[:, None, None] + np.arange(size)[None, None, :]
    patch = padded[r_idx, c_idx]
    inner = np.einsum("nr,nrc,nc->n", py, patch, px, optimize=True)
    if fill:
        inner = inner + fill * (1.0 - py.sum(axis=1) * px.sum(axis=1))
    return inner


def estimate_delta_sigma(traces: Sequence[ExecutedTrace], path: PlannedPath,
                         speed: float | None = None) -> float:
    """Maximum-likelihood per-meter isotropic variance from step residuals.

    Every trace is resampled to the planned step grid; each residual between
    an executed and a nominal step is modelled as ``N(0, step_length * dS * I2)``.
    """
    usable = [t for t in traces if len(t) >= 2]
    if len(usable) < 2:
        raise ValueError("need at least two traces with two or more samples each")
    nominal = step_vectors(path)
    lengths = np.hypot(nominal[:, 0], nominal[:, 1])
    resid = [np.diff(resample_to_steps(t, path, speed), axis=0) - nominal for t in usable]
    return delta_sigma_mle(np.concatenate(resid), np.tile(lengths, len(usable)))


def delta_sigma_mle(residuals: np.ndarray, step_lengths) -> float:
    """MLE of dS given 2-D residuals ``r_k ~ N(0, step_length_k * dS * I2)``."""
    r = np.asarray(residuals, dtype=float).reshape(-1, 2)
    lengths = np.broadcast_to(np.asarray(step_lengths, dtype=float), (len(r),))
    if len(r) == 0:
        raise ValueError("no residuals to estimate from")
    return float(np.sum(np.sum(r ** 2, axis=1) / lengths) / (2 * len(r)))
