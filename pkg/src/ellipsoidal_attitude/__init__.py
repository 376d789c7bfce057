"""Set-membership attitude and angular-velocity estimation on SO(3)."""

from __future__ import annotations

from .dynamics import (
    AttitudeState,
    CallablePotential,
    InertiaParams,
    PendulumPotential,
    ZeroPotential,
    integrator_step,
    propagate,
    total_energy,
)
from .ellipsoid import EllipsoidRn, StateEllipsoid, fuse_intersection, minimal_sum, sample_in, state_membership
from .errors import DegenerateGeometryError, EmptyIntersectionError, EstimationError, IntegratorError, ScenarioError
from .filter import MeasurementBundle, convergence_check, filter_step, flow_update, fuse, measurement_update
from .sim import Scenario, load_scenario, run_estimation, simulate_truth
from .so3 import diagonalize_spd_product, exp_so3, hat, log_so3, vee
from .wahba import DirectionSet, build_profile, solve_wahba

__version__ = "0.1.0"
