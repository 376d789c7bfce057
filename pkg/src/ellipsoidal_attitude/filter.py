"""Set-membership attitude and angular-velocity filter.

One estimation cycle between measurement instants has three stages:

* flow update: the prior ellipsoid is carried ``l`` integrator steps forward,
  the center exactly and the uncertainty matrix through the linearized flow;
* measurement update: direction and gyro measurements with bounded errors
  give a second ellipsoid around the measured state;
* fusion: the minimal-trace ellipsoid containing the intersection of the two
  becomes the posterior.

:func:`convergence_check` evaluates the sufficient condition under which the
fused trace contracts from one measurement to the next.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import AttitudeState, InertiaParams, Potential, integrator_step
from .ellipsoid import (
    EllipsoidRn,
    StateEllipsoid,
    apply_deviation,
    center_difference,
    fuse_intersection,
    minimal_sum,
)
from .errors import DegenerateGeometryError, EstimationError
from .so3 import diagonalize_spd_product, exp_so3, is_spd, log_so3
from .wahba import DirectionSet, augment_pair, build_profile, check_observations, solve_wahba

LINEARIZATION_EPS = 1e-6
DEFAULT_C = 0.99
_H1 = np.vstack([np.eye(3), np.zeros((3, 3))])
_H2 = np.vstack([np.zeros((3, 3)), np.eye(3)])


@dataclass(frozen=True)
class MeasurementBundle:
    """Measurements available at one instant.

    Attributes:
        dirs: reference directions and weights.
        B: ``(3, m)`` measured body directions.
        omega: measured angular velocity (rad/s).
        S_list: ``m`` SPD 3x3 bounds on the direction errors (rad^2).
        T: SPD 3x3 bound on the gyro error ((rad/s)^2).
    """

    dirs: DirectionSet
    B: np.ndarray
    omega: np.ndarray
    S_list: tuple
    T: np.ndarray

    def __post_init__(self):
        B = check_observations(self.B, self.dirs.m)
        if self.dirs.m < 2:
            raise ValueError("at least two directions are needed")
        S = tuple(np.array(S, dtype=float) for S in self.S_list)
        if len(S) != self.dirs.m:
            raise ValueError("one direction error bound per direction is required")
        for i, Si in enumerate(S):
            if Si.shape != (3, 3) or not is_spd(Si):
                raise ValueError(f"S_list[{i}] must be SPD 3x3")
        T = np.array(self.T, dtype=float)
        if T.shape != (3, 3) or not is_spd(T):
            raise ValueError("T must be SPD 3x3")
        w = np.array(self.omega, dtype=float).reshape(-1)
        if w.shape != (3,):
            raise ValueError("omega must be a 3-vector")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "S_list", S)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "omega", w)


@dataclass(frozen=True)
class FlowResult:
    predicted: StateEllipsoid
    A_f: np.ndarray


@dataclass(frozen=True)
class ConvergenceReport:
    """Quantities of the contraction condition ``|A_f|_F < rhs``.

    ``rhs = sqrt(c (q + lambda_min) / (6 chi (1 + q)))`` with
    ``chi = sqrt(6 + 30 kappa)``. The traces of the measured and predicted
    uncertainty matrices are carried along for diagnostics.
    """

    lhs: float
    rhs: float
    lambda_min: float
    kappa: float
    chi: float
    c: float
    q: float
    satisfied: bool
    trace_P_m: float = math.nan
    trace_P_f: float = math.nan

    def as_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "lambda_min": self.lambda_min,
            "kappa": self.kappa,
            "chi": self.chi,
            "c": self.c,
            "q": self.q,
            "satisfied": self.satisfied,
            "trace_P_m": self.trace_P_m,
            "trace_P_f": self.trace_P_f,
        }


def _step_center(C, omega, inertia, potential, M=None):
    s = integrator_step(AttitudeState._unchecked(C, omega), inertia, potential, M)
    return s.C, s.omega


def flow_linearization(center: AttitudeState, inertia: InertiaParams, potential: Potential, eps: float = LINEARIZATION_EPS):
    """Jacobian of the one-step flow in deviation coordinates.

    Column ``j`` is the central difference of the propagated deviation when
    the center is perturbed by ``+-eps`` along coordinate ``j``; attitude
    perturbations enter as ``C exp_so3(eps e_j)`` and deviations after the
    step are read off with ``log_so3`` against the propagated center.

    Returns:
        ``(A, next_center)``.
    """
    C, w = center.C, center.omega
    C1, w1 = _step_center(C, w, inertia, potential)
    C1_T = C1.T
    A = np.empty((6, 6))
    for j in range(6):
        outs = []
        for sgn in (1.0, -1.0):
            d = np.zeros(6)
            d[j] = sgn * eps
            Cp = C @ exp_so3(d[:3]) if j < 3 else C
            Cq, wq = _step_center(Cp, w + d[3:], inertia, potential)
            outs.append(np.concatenate([log_so3(C1_T @ Cq), wq - w1]))
        A[:, j] = (outs[0] - outs[1]) / (2.0 * eps)
    return A, AttitudeState._unchecked(C1, w1)


def flow_update(prior: StateEllipsoid, l: int, inertia: InertiaParams, potential: Potential, eps: float = LINEARIZATION_EPS) -> FlowResult:
    """Propagate ``prior`` over ``l`` integrator steps.

    ``A_f`` is the ordered product of the per-step Jacobians and the
    predicted uncertainty matrix is ``A_f P A_f^T``.
    """
    if l < 1:
        raise ValueError("l must be at least 1")
    center = prior.center
    A_f = np.eye(6)
    for k in range(l):
        try:
            A_k, center = flow_linearization(center, inertia, potential, eps)
        except EstimationError as exc:
            exc.args = (f"flow step {k}: {exc.args[0]}",)
            raise
        A_f = A_k @ A_f
    P_f = A_f @ prior.P @ A_f.T
    return FlowResult(StateEllipsoid(center, 0.5 * (P_f + P_f.T)), A_f)


def attitude_error_coefficients(C_m, L, dirs: DirectionSet, B) -> list[np.ndarray]:
    """First-order map from direction errors to the attitude error.

    With ``K = tr(C_m^T L) I - C_m^T L`` and ``X_i = b_i e_i^T C_m``,
    ``A_i = -K^{-1} w_i (tr(X_i) I - X_i)``, so that
    ``log_so3(C_m^T C) ~= sum_i A_i nu_i``.

    Raises:
        DegenerateGeometryError: ``K`` is numerically singular.
    """
    C_m = np.asarray(C_m, dtype=float)
    B = np.asarray(B, dtype=float)
    CL = C_m.T @ np.asarray(L, dtype=float)
    K = np.trace(CL) * np.eye(3) - CL
    sv = np.linalg.svd(K, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise DegenerateGeometryError("degenerate geometry for error propagation")
    K_inv = np.linalg.inv(K)
    out = []
    for i in range(dirs.m):
        X = np.outer(B[:, i], dirs.E[:, i]) @ C_m
        out.append(-dirs.weights[i] * K_inv @ (np.trace(X) * np.eye(3) - X))
    return out


def _synthetic_bound(S1, S2, b1, b2) -> np.ndarray:
    # The normalized cross product turns by at most (|nu1| + |nu2|) / sin(angle) to first order.
    r1 = math.sqrt(np.linalg.eigvalsh(S1)[-1])
    r2 = math.sqrt(np.linalg.eigvalsh(S2)[-1])
    sin_g = float(np.linalg.norm(np.cross(b1, b2)))
    return ((r1 + r2) / sin_g) ** 2 * np.eye(3)


def measurement_update(bundle: MeasurementBundle) -> StateEllipsoid:
    """Ellipsoid around the measured state.

    The attitude center solves the weighted direction-fitting problem, the
    angular velocity center is the gyro reading, and the uncertainty matrix
    is the minimal-trace bound on the vector sum of the propagated direction
    errors and the gyro error.

    With two directions the cross product is appended as a third one; its
    error bound is the isotropic ``((r1 + r2) / sin g)^2 I`` with ``r_i``
    the largest semi-axis of ``S_i`` and ``g`` the angle between the two
    measured directions.
    """
    dirs, B, S_list = bundle.dirs, bundle.B, list(bundle.S_list)
    if dirs.m == 2:
        S_list.append(_synthetic_bound(S_list[0], S_list[1], B[:, 0], B[:, 1]))
        dirs, B = augment_pair(dirs, B)
    L = build_profile(dirs, B)
    C_m = solve_wahba(L)
    coeffs = attitude_error_coefficients(C_m, L, dirs, B)
    terms = [_H1 @ (A @ S @ A.T) @ _H1.T for A, S in zip(coeffs, S_list)]
    terms.append(_H2 @ bundle.T @ _H2.T)
    P_m = minimal_sum(terms)
    if not is_spd(P_m):
        P_m = P_m + 1e-15 * np.trace(P_m) * np.eye(6)
    return StateEllipsoid(AttitudeState(C_m, bundle.omega), P_m)


def fuse(flow: StateEllipsoid, measured: StateEllipsoid, q: float | None = None) -> tuple[StateEllipsoid, float]:
    """Minimal-trace state ellipsoid containing both inputs' intersection.

    The flow ellipsoid is re-expressed around the measured center, fused in
    R^6, and the fused center mapped back through the measured center.

    Returns:
        ``(posterior, q)`` with ``q`` the scalar actually used.
    """
    x_mf = center_difference(measured.center, flow.center)
    res = fuse_intersection(EllipsoidRn(np.zeros(6), measured.P), EllipsoidRn(x_mf, flow.P), q)
    center = apply_deviation(measured.center, res.center)
    return StateEllipsoid(center, res.P), res.q


def convergence_check(P_m, P_f, A_f, q: float, c: float = DEFAULT_C) -> ConvergenceReport:
    """Evaluate the contraction condition for one measurement instant.

    ``lambda_min`` is the smallest eigenvalue of ``P_m^{-1} P_f`` (real and
    positive, obtained through :func:`diagonalize_spd_product`), ``kappa``
    the condition number of ``P_m``. ``q = 0`` and ``q = inf`` evaluate the
    bound in its limits, matching the limit members returned by the fusion.
    """
    if not 0.0 < c < 1.0:
        raise ValueError("c must lie in (0, 1)")
    if not q >= 0.0:
        raise ValueError("q must be non-negative")
    P_m = np.asarray(P_m, dtype=float)
    P_f = np.asarray(P_f, dtype=float)
    n = P_m.shape[0]
    if n != 6:
        raise ValueError("the contraction bound is stated for 6x6 uncertainty matrices")
    sig = np.linalg.eigvalsh(P_m)
    kappa = float(sig[-1] / sig[0])
    chi = math.sqrt(6.0 + 30.0 * kappa)
    _, lam = diagonalize_spd_product(np.linalg.inv(P_m), P_f)
    lam_min = float(lam[0])
    ratio = 1.0 if math.isinf(q) else (q + lam_min) / (1.0 + q)
    rhs = math.sqrt(c * ratio / (6.0 * chi))
    lhs = float(np.linalg.norm(A_f, "fro"))
    return ConvergenceReport(
        lhs, rhs, lam_min, kappa, chi, c, q, lhs < rhs, float(np.trace(P_m)), float(np.trace(P_f))
    )


def _staged(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except EstimationError as exc:
        exc.stage = stage
        raise


def filter_step(
    prior: StateEllipsoid,
    l: int,
    inertia: InertiaParams,
    potential: Potential,
    bundle: MeasurementBundle | None,
    q: float | None = None,
    c: float = DEFAULT_C,
):
    """One full estimation cycle.

    ``q`` fixes the fusion scalar (searched when ``None``); the convergence
    report uses the same ``q`` and the contraction constant ``c``. With
    ``bundle=None`` only the flow update runs and the report is ``None``.

    Returns:
        ``(posterior, report)``.
    """
    flow = _staged("flow update", flow_update, prior, l, inertia, potential)
    if bundle is None:
        return flow.predicted, None
    measured = _staged("measurement update", measurement_update, bundle)
    posterior, q_used = _staged("fusion", fuse, flow.predicted, measured, q)
    report = convergence_check(measured.P, flow.predicted.P, flow.A_f, q_used, c)
    return posterior, report
