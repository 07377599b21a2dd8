"""Inverse stability analysis for lossless structure-preserving power grids."""

from .certificates import (
    DEFAULT_LAMBDA,
    InverseStabilityRegion,
    classical_certificate,
    e_min_oracle,
    g_constant,
    inverse_region,
    min_distance_to_boundary,
    quad_lower_D,
    quad_upper_F,
    region_contains,
    theorem1_certificate,
)
from .control import (
    ControlPlan,
    DispatchProblem,
    SopfProblem,
    dispatch_for_ep,
    execute_plan,
    min_sync_dispatch,
    next_ep_on_segment,
    plan_emergency_control,
    sopf_dispatch,
)
from .dynamics import SystemState, Trajectory, angle_distance, energy, simulate
from .grid import Bus, GridNetwork, InjectionVector, Line, load_grid
from .powerflow import EquilibriumPoint, check_sync_condition, dc_approx_ep, solve_equilibrium

__version__ = "0.1.0"
