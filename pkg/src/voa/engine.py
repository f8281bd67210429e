"""Expected path costs and value of assistance on a cost-map.

Costs are accumulated over the discrete steps ``k = 0..m`` of a planned
path. At each step the agent's location is Gaussian around the planned
point ``w_k`` and the expected cost is the inner product of the exact cell
masses with the map.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .costmap import CostMap, window_at
from .geometry import PlannedPath, Waypoint, nearest_natural, step_array
from .uncertainty import (
    CovarianceModel,
    _diagonal_variances,
    axis_masses,
    cell_conditional_means,
    default_kernel_size,
    discretize,
    expected_cell_costs,
    kernel_difference,
)

log = logging.getLogger(__name__)

ASSIST_TYPES = ("relocation", "localization")


@dataclass(frozen=True)
class CostQuery:
    map: CostMap
    path: PlannedPath
    model: CovarianceModel
    fill: float = 0.0

    def __post_init__(self):
        pts = step_array(self.path)
        cm = self.map
        lo = np.array([cm.origin.x, cm.origin.y])
        hi = lo + cm.cell_size * np.array([cm.width, cm.height])
        if np.any(pts < lo) or np.any(pts >= hi):
            log.warning("planned path leaves the cost-map; off-map cells cost %g", self.fill)


@dataclass(frozen=True)
class VoaResult:
    tau_assist: float
    voa: float
    cost_unassisted_remainder: float
    cost_assisted_remainder: float
    corrective_cost: float = 0.0
    step: int = 0
    assist: str = "relocation"
    expected_correction_steps: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def snap_to_step(path: PlannedPath, tau: float) -> int:
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    m = path.step_count
    return min(m, nearest_natural(tau * m))


def _step_range(m: int, tau0: float, tau1: float) -> range:
    if not 0.0 <= tau0 <= tau1 <= 1.0:
        raise ValueError(f"need 0 <= tau0 <= tau1 <= 1, got ({tau0}, {tau1})")
    # tolerate representation error when tau is itself k/m
    k0 = math.ceil(tau0 * m - 1e-9)
    k1 = math.floor(tau1 * m + 1e-9)
    return range(k0, k1 + 1)


def _initial_variances(model: CovarianceModel) -> np.ndarray:
    return np.array(_diagonal_variances(model.initial_covariance))


def _remainder_cost(query: CostQuery, steps: Sequence[int], variances: np.ndarray) -> float:
    """Sum over ``steps`` of the expected cost at ``w_k`` with per-axis ``variances``."""
    if len(steps) == 0:
        return 0.0
    pts = step_array(query.path)[list(steps)]
    return float(np.sum(expected_cell_costs(query.map, pts, variances, query.fill)))


def expected_cost(query: CostQuery, tau0: float = 0.0, tau1: float = 1.0) -> float:
    """Expected accumulated cost over the steps with ``tau0 <= k/m <= tau1``."""
    path = query.path
    ks = np.array(_step_range(path.step_count, tau0, tau1))
    var = _initial_variances(query.model)[None, :] + (ks * path.step_length * query.model.delta_sigma)[:, None]
    return _remainder_cost(query, ks, var)


def voa_relocation(query: CostQuery, tau_assist: float) -> VoaResult:
    """Value of resetting the agent onto its planned point at ``tau_assist``.

    ``tau_assist`` is snapped to the nearest step boundary ``l/m``.
    """
    path = query.path
    m, step = path.step_count, path.step_length
    l = snap_to_step(path, tau_assist)
    ks = np.arange(l, m + 1)
    ds = query.model.delta_sigma
    unassisted_var = _initial_variances(query.model)[None, :] + (ks * step * ds)[:, None]
    assisted_var = np.repeat(((ks - l) * step * ds)[:, None], 2, axis=1)
    if l == 0:
        assisted_var = unassisted_var
    unassisted = _remainder_cost(query, ks, unassisted_var)
    assisted = _remainder_cost(query, ks, assisted_var)
    return VoaResult(l / m, unassisted - assisted, unassisted, assisted, 0.0, l, "relocation")


def voa_relocation_kernel_sum(query: CostQuery, tau_assist: float, size: int | None = None) -> float:
    """Relocation value as one sum of kernel differences against map windows.

    The default window covers the whole map from any step point, so it
    agrees with :func:`voa_relocation` up to summation order.
    """
    path, cm, model = query.path, query.map, query.model
    m, step = path.step_count, path.step_length
    l = snap_to_step(path, tau_assist)
    if size is None:
        size = 2 * max(cm.width, cm.height) + 1
    pts = step_array(path)
    init = model.initial_covariance
    total = 0.0
    for k in range(l, m + 1):
        w = Waypoint(*pts[k])
        before = init + k * step * model.delta_sigma * np.eye(2)
        after = before if l == 0 else (k - l) * step * model.delta_sigma * np.eye(2)
        ka = discretize(w, before, cm.cell_size, size, cm.origin)
        kb = discretize(w, after, cm.cell_size, size, cm.origin)
        window = window_at(cm, w, size, query.fill)
        total += float(np.sum(kernel_difference(ka, kb) * window.values))
    return total


@dataclass(frozen=True)
class InterventionMixture:
    """Weighted points standing in for where the agent is when localized."""

    points: np.ndarray
    weights: np.ndarray
    correction_steps: np.ndarray
    retained_mass: float

    @property
    def expected_correction_steps(self) -> float:
        return float(np.sum(self.weights * self.correction_steps))

    def arrival_covariance(self, target: np.ndarray, delta_sigma: float) -> np.ndarray:
        """Per-axis second moment of the corrective path's end point about ``target``.

        Corrective noise contributes ``m' * delta_sigma``; walking a whole
        number of unit steps leaves a deterministic overshoot or shortfall
        of up to half a step, which contributes its square.
        """
        offsets = target[None, :] - self.points
        dist = np.hypot(offsets[:, 0], offsets[:, 1])
        scale = np.divide(self.correction_steps, dist, out=np.zeros_like(dist), where=dist > 0)
        miss = self.points + scale[:, None] * offsets - target[None, :]
        second = np.sum(self.weights[:, None] * miss ** 2, axis=0)
        return self.expected_correction_steps * delta_sigma + second


def _check_epsilon(epsilon: float) -> None:
    if not 0 < epsilon <= 1e-2:
        raise ValueError(f"mixture truncation must lie in (0, 1e-2], got {epsilon}")


def _location_at_step(query: CostQuery, l: int) -> tuple[np.ndarray, np.ndarray]:
    path, model = query.path, query.model
    return step_array(path)[l], _initial_variances(model) + l * path.step_length * model.delta_sigma


def grid_intervention_mixture(query: CostQuery, l: int, epsilon: float = 1e-4) -> InterventionMixture:
    """Map cells carrying the location distribution at step ``l``.

    Cells are kept in decreasing mass order until ``1 - epsilon`` of the
    mass is covered, then reweighted to sum to one. Each cell is
    represented by the distribution's conditional mean inside it. The
    correction length is evaluated at that single point, which biases it
    when cells are not small against the distribution's spread.
    """
    _check_epsilon(epsilon)
    cm = query.map
    target, var = _location_at_step(query, l)
    h = cm.cell_size
    size = default_kernel_size(np.diag(var), h)
    col = math.floor((target[0] - cm.origin.x) / h)
    row = math.floor((target[1] - cm.origin.y) / h)
    half = size // 2
    x_edges = cm.origin.x + (col - half + np.arange(size + 1)) * h
    y_edges = cm.origin.y + (row - half + np.arange(size + 1)) * h
    px = axis_masses(np.array([target[0]]), np.array([var[0]]), x_edges)[0]
    py = axis_masses(np.array([target[1]]), np.array([var[1]]), y_edges)[0]
    cx = cell_conditional_means(target[0], var[0], x_edges)
    cy = cell_conditional_means(target[1], var[1], y_edges)
    masses = np.outer(py, px).ravel()
    # stable sort keeps row-major order among equal masses
    order = np.argsort(-masses, kind="stable")
    cum = np.cumsum(masses[order])
    n_keep = int(np.searchsorted(cum, (1.0 - epsilon) * cum[-1], side="left")) + 1
    keep = np.sort(order[:min(n_keep, len(order))])
    rows, cols = np.divmod(keep, size)
    points = np.column_stack([cx[cols], cy[rows]])
    weights = masses[keep]
    retained = float(weights.sum())
    dist = np.hypot(*(target[None, :] - points).T)
    steps = np.floor(dist + 0.5).astype(int)
    return InterventionMixture(points, weights / retained, steps, retained)


def _band_mass(var: np.ndarray, lo: float, hi: float) -> float:
    # isotropic offsets have a Rayleigh-distributed length
    return math.exp(-lo * lo / (2 * var[0])) - math.exp(-hi * hi / (2 * var[0]))


def polar_intervention_mixture(query: CostQuery, l: int, epsilon: float = 1e-4,
                               radial_nodes: int = 4, arc_spacing: float = 0.25,
                               min_angles: int = 16) -> InterventionMixture:
    """Location distribution at step ``l`` integrated in rings around ``w_l``.

    Ring ``n`` holds offsets of length in ``[n - 1/2, n + 1/2)``, all of which
    need exactly ``n`` corrective steps. Rings are kept outward until
    ``1 - epsilon`` of the mass is covered. Within a ring, Gauss-Legendre
    nodes in radius and evenly spaced angles (about ``arc_spacing`` cells
    apart) carry the ring's probability.
    """
    _check_epsilon(epsilon)
    target, var = _location_at_step(query, l)
    if np.all(var == 0):
        return InterventionMixture(target[None, :].copy(), np.ones(1), np.zeros(1, dtype=int), 1.0)
    if np.any(var == 0):
        raise ValueError("localization needs a location covariance that is zero or non-singular")
    isotropic = var[0] == var[1]
    gl_x, gl_w = np.polynomial.legendre.leggauss(radial_nodes)
    pts, wts, steps = [target[None, :].copy()], [], [np.zeros(1, dtype=int)]
    sd_max = math.sqrt(var.max())
    r_max = sd_max * math.sqrt(2 * math.log(1 / epsilon)) + 1.0
    masses = []
    n = 0
    while True:
        lo, hi = max(n - 0.5, 0.0), n + 0.5
        if n == 0:
            mass = _band_mass(var, 0.0, 0.5) if isotropic else None
            masses.append(mass)
            n += 1
            continue
        r = 0.5 * (hi + lo) + 0.5 * (hi - lo) * gl_x
        n_theta = max(min_angles, math.ceil(2 * math.pi * hi / (arc_spacing * query.map.cell_size)))
        theta = (np.arange(n_theta) + 0.5) * (2 * math.pi / n_theta)
        rr, tt = np.meshgrid(r, theta, indexing="ij")
        off = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1).reshape(-1, 2)
        dens = np.exp(-0.5 * (off[:, 0] ** 2 / var[0] + off[:, 1] ** 2 / var[1])) / (2 * math.pi * math.sqrt(var[0] * var[1]))
        w = (dens * rr.ravel() * np.repeat(gl_w, n_theta) * 0.5 * (hi - lo) * (2 * math.pi / n_theta))
        if isotropic:
            w = w * (_band_mass(var, lo, hi) / w.sum())
        pts.append(target[None, :] + off)
        wts.append(w)
        steps.append(np.full(len(off), n))
        masses.append(float(w.sum()))
        n += 1
        if hi > r_max:
            break
    if masses[0] is None:
        # ring 0 mass is whatever the outer rings leave over
        masses[0] = max(0.0, 1.0 - sum(masses[1:]))
    wts.insert(0, np.array([masses[0]]))
    cum = np.cumsum(masses)
    n_keep = int(np.searchsorted(cum, 1.0 - epsilon, side="left")) + 1
    points = np.concatenate(pts[:n_keep])
    weights = np.concatenate(wts[:n_keep])
    retained = float(weights.sum())
    return InterventionMixture(points, weights / retained, np.concatenate(steps[:n_keep]), retained)


def intervention_mixture(query: CostQuery, l: int, epsilon: float = 1e-4,
                         method: str = "polar") -> InterventionMixture:
    if method == "polar":
        return polar_intervention_mixture(query, l, epsilon)
    if method == "grid":
        return grid_intervention_mixture(query, l, epsilon)
    raise ValueError(f"unknown mixture method {method!r}")


def corrective_costs(query: CostQuery, target: np.ndarray, mixture: InterventionMixture) -> np.ndarray:
    """Expected cost of each straight unit-speed return path to ``target``.

    A return from ``x`` with ``m'`` steps visits ``x + j*u`` for
    ``j = 0..m'-1`` with variance ``j * delta_sigma``; the arrival point is
    the first point of the resumed plan and is charged there.
    """
    ds = query.model.delta_sigma
    offsets = target[None, :] - mixture.points
    dist = np.hypot(offsets[:, 0], offsets[:, 1])
    units = np.divide(offsets, dist[:, None], out=np.zeros_like(offsets), where=dist[:, None] > 0)
    costs = np.zeros(len(mixture.points))
    for j in range(int(mixture.correction_steps.max(initial=0))):
        active = mixture.correction_steps > j
        pts = mixture.points[active] + j * units[active]
        costs[active] += expected_cell_costs(query.map, pts, j * ds, query.fill)
    return costs


def voa_localization(query: CostQuery, tau_assist: float, epsilon: float = 1e-4,
                     method: str = "polar") -> VoaResult:
    """Value of telling the agent its true location at ``tau_assist``.

    The agent then walks straight back to its planned point, accruing
    uncertainty on the way, and resumes the plan with the mixture-averaged
    post-correction covariance.
    """
    path, model = query.path, query.model
    m, step = path.step_count, path.step_length
    l = snap_to_step(path, tau_assist)
    target = step_array(path)[l]
    mixture = intervention_mixture(query, l, epsilon, method)
    corrective = float(np.sum(mixture.weights * corrective_costs(query, target, mixture)))
    post_correction = mixture.arrival_covariance(target, model.delta_sigma)
    ks = np.arange(l, m + 1)
    unassisted_var = _initial_variances(model)[None, :] + (ks * step * model.delta_sigma)[:, None]
    assisted_var = ((ks - l) * step * model.delta_sigma)[:, None] + post_correction[None, :]
    unassisted = _remainder_cost(query, ks, unassisted_var)
    assisted = _remainder_cost(query, ks, assisted_var)
    return VoaResult(l / m, unassisted - (corrective + assisted), unassisted, assisted, corrective, l,
                     "localization", mixture.expected_correction_steps)


def compute_voa(query: CostQuery, tau_assist: float, assist: str = "relocation",
                epsilon: float = 1e-4) -> VoaResult:
    if assist == "relocation":
        return voa_relocation(query, tau_assist)
    if assist == "localization":
        return voa_localization(query, tau_assist, epsilon)
    raise ValueError(f"unknown assistance type {assist!r}; expected one of {ASSIST_TYPES}")


def rank_waypoints(query: CostQuery, taus: Sequence[float], k: int, assist: str = "relocation",
                   epsilon: float = 1e-4) -> tuple[list[VoaResult], list[float]]:
    """Candidates ordered by value (descending, earlier tau first on ties) and the top-``k`` taus."""
    if len(taus) == 0:
        raise ValueError("no candidate waypoints given")
    results = [compute_voa(query, t, assist, epsilon) for t in taus]
    results.sort(key=lambda r: (-r.voa, r.tau_assist))
    return results, [r.tau_assist for r in results[:max(k, 0)]]
