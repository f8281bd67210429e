"""Value of assistance for agents navigating under Gaussian localization drift."""

from .costmap import CostMap, cost_at, generate_random, window_at
from .engine import CostQuery, VoaResult, expected_cost, rank_waypoints, voa_localization, voa_relocation
from .geometry import ExecutedTrace, PlannedPath, Waypoint, point_at, progress_of_trace, step_points
from .simulator import AecdEstimate, SimConfig, empirical_cost_of_trace, estimate_aecd, simulate_run
from .uncertainty import (
    CovarianceModel,
    DiscreteKernel,
    covariance_after_relocation,
    covariance_at,
    discretize,
    estimate_delta_sigma,
    kernel_difference,
)

__version__ = "0.1.0"
