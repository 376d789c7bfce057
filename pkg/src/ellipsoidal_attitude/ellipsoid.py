"""Uncertainty-ellipsoid calculus in R^n and on the attitude state space.

An ellipsoid ``E(c, P)`` is the set ``{x : (x - c)^T P^{-1} (x - c) <= 1}``;
its size is ``tr(P)``. A state ellipsoid around ``(C_hat, w_hat)`` contains
``(C, w)`` when ``[log_so3(C_hat^T C); w - w_hat]`` lies in ``E(0, P)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import AttitudeState
from .errors import EmptyIntersectionError
from .so3 import exp_so3, is_spd, log_so3, spd_sqrt

CONTAINS_TOL = 1e-9


def _as_spd(P, name: str = "P") -> np.ndarray:
    P = np.array(P, dtype=float)
    if not is_spd(P):
        raise ValueError(f"{name} must be symmetric positive definite")
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class EllipsoidRn:
    center: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(-1)
        P = _as_spd(self.P)
        if P.shape != (c.size, c.size):
            raise ValueError("center and P dimensions disagree")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "P", P)

    @property
    def n(self) -> int:
        return self.center.size


@dataclass(frozen=True)
class StateEllipsoid:
    """Ellipsoid on the attitude state space, ``P`` is 6x6 over ``[zeta; d_omega]``."""

    center: AttitudeState
    P: np.ndarray

    def __post_init__(self):
        P = _as_spd(self.P)
        if P.shape != (6, 6):
            raise ValueError("state ellipsoid needs a 6x6 uncertainty matrix")
        object.__setattr__(self, "P", P)


def quadratic_form(P, d) -> float:
    """``d^T P^{-1} d`` through a Cholesky solve."""
    Lc = np.linalg.cholesky(P)
    y = np.linalg.solve(Lc, d)
    return float(y @ y)


def contains(E: EllipsoidRn, x, tol: float = CONTAINS_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    if x.shape != E.center.shape:
        raise ValueError("point dimension does not match the ellipsoid")
    return quadratic_form(E.P, x - E.center) <= 1.0 + tol


def size(E) -> float:
    """Trace of the uncertainty matrix: the sum of squared semi-axes."""
    return float(np.trace(E.P))


def state_deviation(center: AttitudeState, state: AttitudeState) -> np.ndarray:
    """Stacked ``[log_so3(C_hat^T C); w - w_hat]``."""
    zeta = log_so3(center.C.T @ state.C)
    return np.concatenate([zeta, state.omega - center.omega])


def apply_deviation(center: AttitudeState, x) -> AttitudeState:
    """Inverse of :func:`state_deviation`."""
    x = np.asarray(x, dtype=float)
    return AttitudeState(center.C @ exp_so3(x[:3]), center.omega + x[3:])


def state_membership(SE: StateEllipsoid, state: AttitudeState, tol: float = CONTAINS_TOL, inflation: float = 1.0) -> bool:
    """Whether ``state`` lies in ``SE``.

    ``inflation`` scales the uncertainty matrix: the test becomes
    ``x^T P^{-1} x <= inflation``.
    """
    x = state_deviation(SE.center, state)
    return quadratic_form(SE.P, x) <= inflation * (1.0 + tol)


def minimal_sum(terms) -> np.ndarray:
    """Minimal-trace ellipsoid containing the vector sum of centered ellipsoids.

    ``P = (sum_i sqrt(tr P_i)) * (sum_i P_i / sqrt(tr P_i))``. Terms whose
    trace is at or below 1e-14 times the largest trace are ignored. Individual terms may be singular
    (degenerate ellipsoids); the result is SPD as soon as the terms jointly
    span the space.
    """
    mats = [np.asarray(T, dtype=float) for T in terms]
    if not mats:
        raise ValueError("minimal_sum needs at least one term")
    if any(T.shape != mats[0].shape for T in mats):
        raise ValueError("all terms must have the same shape")
    traces = [float(np.trace(T)) for T in mats]
    floor = 1e-14 * max(max(traces), 0.0)
    total_root = 0.0
    acc = np.zeros_like(mats[0])
    for T, tr in zip(mats, traces):
        if tr <= floor or tr <= 0.0:
            continue
        r = math.sqrt(tr)
        total_root += r
        acc += T / r
    if total_root == 0.0:
        raise ValueError("minimal_sum: every term is degenerate")
    P = total_root * acc
    return 0.5 * (P + P.T)


def center_difference(measured_center: AttitudeState, flow_center: AttitudeState) -> np.ndarray:
    """Offset of the flow center seen from the measured center.

    ``[zeta_mf; dw_mf]`` with ``C_f = C_m exp_so3(zeta_mf)`` and
    ``w_f = w_m + dw_mf``.
    """
    return state_deviation(measured_center, flow_center)


@dataclass(frozen=True)
class FusionResult:
    center: np.ndarray
    P: np.ndarray
    q: float
    beta: float


def _spd_inverse(P) -> np.ndarray:
    Lc = np.linalg.cholesky(P)
    Li = np.linalg.solve(Lc, np.eye(P.shape[0]))
    return Li.T @ Li


def intersection_bound(P_m, x_mf, P_f, q: float) -> FusionResult:
    """Ellipsoid containing ``E(0, P_m) & E(x_mf, P_f)`` for one value of ``q > 0``.

    ``L = P_m (P_m + P_f/q)^{-1}``, center ``L x_mf`` and
    ``P = beta(q) (I - L) P_m`` with
    ``beta(q) = 1 + q - x_mf^T P_m^{-1} L x_mf``. ``beta`` may come out
    non-positive; a negative value proves the intersection is empty.

    ``(I - L) P_m`` is evaluated as ``(P_m^{-1} + q P_f^{-1})^{-1}``, which
    avoids the cancellation of the direct form when ``q`` is large.
    """
    P_m = np.asarray(P_m, dtype=float)
    P_f = np.asarray(P_f, dtype=float)
    x_mf = np.asarray(x_mf, dtype=float)
    Pf_inv = _spd_inverse(P_f)
    Y_inv = _spd_inverse(_spd_inverse(P_m) + q * Pf_inv)
    # P_m^{-1} L = (P_m + P_f/q)^{-1} and L = q Y^{-1} P_f^{-1}
    beta = 1.0 + q - float(x_mf @ np.linalg.solve(P_m + P_f / q, x_mf))
    center = q * (Y_inv @ (Pf_inv @ x_mf))
    P = beta * Y_inv
    return FusionResult(center, 0.5 * (P + P.T), q, beta)


LOG_Q_RANGE = (-6.0, 6.0)
_COARSE_POINTS = 50
_BETA_FLOOR = 1e-12
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _trace_at(P_m, x_mf, P_f, logq: float) -> float:
    res = intersection_bound(P_m, x_mf, P_f, 10.0**logq)
    if res.beta <= _BETA_FLOOR:
        return math.inf
    return float(np.trace(res.P))


def optimal_q(P_m, x_mf, P_f, log_q_range=LOG_Q_RANGE, xtol: float = 1e-10) -> float:
    """Scalar ``q`` minimizing the trace of the intersection bound.

    A 50-point scan over ``log10 q`` brackets the minimum, then a
    golden-section search refines it. Values of ``q`` with ``beta <= 1e-12``
    are excluded.

    Raises:
        EmptyIntersectionError: some scanned ``q`` has ``beta < 0``, which
            proves the ellipsoids are disjoint, or no ``q`` is admissible.
    """
    lo, hi = log_q_range
    grid = np.linspace(lo, hi, _COARSE_POINTS)
    vals = []
    for g in grid:
        res = intersection_bound(P_m, x_mf, P_f, 10.0**g)
        if res.beta < -_BETA_FLOOR * (1.0 + res.q):
            raise EmptyIntersectionError(
                f"empty intersection: beta(q={res.q:.3g}) = {res.beta:.3e} < 0, predicted and measured ellipsoids are disjoint"
            )
        vals.append(math.inf if res.beta <= _BETA_FLOOR else float(np.trace(res.P)))
    i = int(np.argmin(vals))
    if not math.isfinite(vals[i]):
        raise EmptyIntersectionError("empty intersection: predicted and measured ellipsoids are inconsistent")
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    best_x, best_v = grid[i], vals[i]
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = _trace_at(P_m, x_mf, P_f, c)
    fd = _trace_at(P_m, x_mf, P_f, d)
    while b - a > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = _trace_at(P_m, x_mf, P_f, c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = _trace_at(P_m, x_mf, P_f, d)
    for x, v in ((c, fc), (d, fd)):
        if v < best_v:
            best_x, best_v = x, v
    return 10.0**best_x


def fuse_intersection(measured: EllipsoidRn, flow: EllipsoidRn, q: float | None = None) -> FusionResult:
    """Minimal-trace ellipsoid containing the intersection of two ellipsoids.

    ``q`` is searched over ``[1e-6, 1e6]`` unless given explicitly. The
    searched optimum is compared with the two limits of the family, ``q -> 0``
    (the measured ellipsoid itself) and ``q -> inf`` (the flow ellipsoid),
    and the smallest is returned; a limit is reported as ``q = 0.0`` or
    ``q = inf``. The returned center is in the same coordinates as the inputs.

    Raises:
        EmptyIntersectionError: the ellipsoids are disjoint or no admissible
            ``q`` exists.
    """
    if measured.n != flow.n:
        raise ValueError("ellipsoids differ in dimension")
    x_mf = flow.center - measured.center
    if q is not None:
        if not (q > 0.0 and math.isfinite(q)):
            raise ValueError("q must be positive and finite")
        res = intersection_bound(measured.P, x_mf, flow.P, q)
        if res.beta <= _BETA_FLOOR:
            raise EmptyIntersectionError(f"empty intersection: beta(q={q:g}) = {res.beta:.3e}")
        return FusionResult(res.center + measured.center, res.P, res.q, res.beta)
    res = intersection_bound(measured.P, x_mf, flow.P, optimal_q(measured.P, x_mf, flow.P))
    best = FusionResult(res.center + measured.center, res.P, res.q, res.beta)
    for cand in (FusionResult(measured.center, measured.P, 0.0, 1.0), FusionResult(flow.center, flow.P, math.inf, 1.0)):
        if np.trace(cand.P) < np.trace(best.P):
            best = cand
    return best


def sample_in(E: EllipsoidRn, count: int, seed=None, boundary: bool = False) -> np.ndarray:
    """``(count, n)`` points drawn uniformly inside ``E`` (or on its surface).

    Samples are the affine image ``c + P^{1/2} u`` of uniform draws ``u`` in
    the unit ball; deterministic for a given ``seed``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = E.n
    u = rng.standard_normal((count, n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    if not boundary:
        u *= rng.random((count, 1)) ** (1.0 / n)
    return E.center + u @ spd_sqrt(E.P)
