"""Rigid-body attitude dynamics in an attitude-dependent potential.

The discrete flow is the Lie group variational integrator

    h hat(J w_k + h/2 M_k) = F_k J_d - J_d F_k^T
    C_{k+1} = C_k F_k
    J w_{k+1} = F_k^T J w_k + h/2 F_k^T M_k + h/2 M_{k+1}

with ``J_d = tr(J)/2 I - J`` and ``F_k = exp_so3(f_k)``. The implicit first
equation is solved for ``f_k`` by Newton's method on its vector form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegratorError
from .so3 import exp_so3, hat, is_rotation, is_spd, vee

MAX_NEWTON_ITERATIONS = 50


def _cross(u, v) -> np.ndarray:
    # np.cross carries heavy per-call overhead for single 3-vectors
    return np.array([u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]])


def _norm(v) -> float:
    return math.sqrt(float(v @ v))


@dataclass(frozen=True)
class InertiaParams:
    """Inertia matrix ``J`` (kg m^2) and integration step ``h`` (s)."""

    J: np.ndarray
    h: float
    J_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        if J.shape != (3, 3) or not is_spd(J):
            raise ValueError("J must be a symmetric positive definite 3x3 matrix")
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ValueError("step size h must be positive")
        p = np.linalg.eigvalsh(J)
        if np.any(p > p.sum() - p + 1e-12 * p.sum()):
            raise ValueError("principal moments of J violate the triangle inequality")
        J_inv = np.linalg.inv(J)
        J.setflags(write=False)
        J_inv.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "J_inv", J_inv)
        object.__setattr__(self, "h", float(self.h))

    @property
    def J_d(self) -> np.ndarray:
        return 0.5 * np.trace(self.J) * np.eye(3) - self.J


@dataclass(frozen=True)
class AttitudeState:
    """Attitude ``C`` (body to reference) and body angular velocity ``omega`` (rad/s)."""

    C: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        C = np.array(self.C, dtype=float)
        w = np.array(self.omega, dtype=float).reshape(-1)
        if not is_rotation(C):
            raise ValueError("C is not a rotation matrix")
        if w.shape != (3,) or not np.all(np.isfinite(w)):
            raise ValueError("omega must be a finite 3-vector")
        C.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "omega", w)

    @classmethod
    def _unchecked(cls, C: np.ndarray, omega: np.ndarray) -> AttitudeState:
        # integrator output: C is a product of rotations, skip re-validation
        obj = object.__new__(cls)
        object.__setattr__(obj, "C", C)
        object.__setattr__(obj, "omega", omega)
        return obj


class Potential:
    """Attitude-dependent potential energy ``U(C)``.

    Subclasses implement :meth:`value` and :meth:`gradient` (the matrix
    ``dU/dC`` of partial derivatives with respect to the entries of ``C``).
    Implementations must be stateless.
    """

    approximate_gradient = False

    def value(self, C) -> float:
        raise NotImplementedError

    def gradient(self, C) -> np.ndarray:
        raise NotImplementedError


class ZeroPotential(Potential):
    """Free rigid body."""

    def value(self, C) -> float:
        return 0.0

    def gradient(self, C) -> np.ndarray:
        return np.zeros((3, 3))

    def __repr__(self):
        return "ZeroPotential()"


def _fd_gradient(fun, C, step: float = 1e-6) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    G = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            dC = np.zeros((3, 3))
            dC[i, j] = step
            G[i, j] = (fun(C + dC) - fun(C - dC)) / (2.0 * step)
    return G


def check_gradient(potential: Potential, n_samples: int = 3, seed: int = 0, rtol: float = 1e-6) -> None:
    """Compare ``potential.gradient`` against central differences of ``value``.

    Raises:
        ValueError: on a mismatch larger than ``rtol`` relative to the
            gradient scale.
    """
    rng = np.random.default_rng(seed)
    for _ in range(n_samples):
        C = exp_so3(rng.uniform(-np.pi, np.pi, 3) / np.sqrt(3))
        G = np.asarray(potential.gradient(C), dtype=float)
        G_fd = _fd_gradient(potential.value, C)
        scale = max(1.0, float(np.max(np.abs(G_fd))))
        if np.max(np.abs(G - G_fd)) > rtol * scale:
            raise ValueError(f"{potential!r}: gradient does not match finite differences of the potential")


class PendulumPotential(Potential):
    """Uniform gravity on a body pivoted at a fixed point (3D pendulum).

    ``U(C) = -mass * gravity * e3 . (C @ rho)`` with ``rho`` the body-frame
    vector from the pivot to the mass center. Gravity points along ``+e3``,
    so ``C = I`` with ``rho`` along ``+e3`` is the hanging equilibrium.
    """

    def __init__(self, mass: float, gravity: float, rho):
        self.mass = float(mass)
        self.gravity = float(gravity)
        self.rho = np.array(rho, dtype=float).reshape(3)
        self._grad = -self.mass * self.gravity * np.outer([0.0, 0.0, 1.0], self.rho)
        check_gradient(self)

    def value(self, C) -> float:
        return -self.mass * self.gravity * float(np.asarray(C)[2] @ self.rho)

    def gradient(self, C) -> np.ndarray:
        return self._grad.copy()

    def __repr__(self):
        return f"PendulumPotential(mass={self.mass}, gravity={self.gravity}, rho={self.rho.tolist()})"


class CallablePotential(Potential):
    """Potential built from user callables.

    If ``gradient_fn`` is omitted the gradient comes from central finite
    differences and :attr:`approximate_gradient` is set.
    """

    def __init__(self, value_fn, gradient_fn=None, fd_step: float = 1e-6):
        self._value = value_fn
        self._gradient = gradient_fn
        self.fd_step = fd_step
        self.approximate_gradient = gradient_fn is None
        if gradient_fn is not None:
            check_gradient(self)

    def value(self, C) -> float:
        return float(self._value(np.asarray(C, dtype=float)))

    def gradient(self, C) -> np.ndarray:
        if self._gradient is None:
            return _fd_gradient(self.value, C, self.fd_step)
        return np.asarray(self._gradient(np.asarray(C, dtype=float)), dtype=float)


def moment_from_potential(C, potential: Potential) -> np.ndarray:
    """Moment of the potential in the body frame.

    Sum of ``r_i x v_i`` over the rows of ``C`` and ``dU/dC``; equal to
    ``vee(dU^T C - C^T dU)``.
    """
    C = np.asarray(C, dtype=float)
    G = potential.gradient(C)
    return _cross(C[0], G[0]) + _cross(C[1], G[1]) + _cross(C[2], G[2])


def moment_from_potential_matrix_form(C, potential: Potential) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    G = potential.gradient(C)
    return vee(G.T @ C - C.T @ G)


@dataclass(frozen=True)
class StepSolution:
    """Solution ``f`` of the implicit step and ``F = exp_so3(f)``."""

    f: np.ndarray
    F: np.ndarray
    newton_iterations: int
    residual_norm: float


def _coefficients(theta: float) -> tuple[float, float, float, float]:
    """``a = sin t/t``, ``b = (1 - cos t)/t^2`` and ``a'/t``, ``b'/t``."""
    if theta < 1e-4:
        t2 = theta * theta
        return (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            -1.0 / 3.0 + t2 / 30.0,
            -1.0 / 12.0 + t2 / 180.0,
        )
    s, c = math.sin(theta), math.cos(theta)
    t2 = theta * theta
    return (
        s / theta,
        2.0 * math.sin(0.5 * theta) ** 2 / t2,
        (theta * c - s) / (t2 * theta),
        (theta * s - 2.0 * (1.0 - c)) / (t2 * t2),
    )


def implicit_residual(f, J, rhs) -> np.ndarray:
    """Vector form of the implicit equation, ``vee(F J_d - J_d F^T) - rhs``."""
    f = np.asarray(f, dtype=float)
    a, b, _, _ = _coefficients(_norm(f))
    Jf = J @ f
    return a * Jf + b * _cross(f, Jf) - rhs


def _newton_floats(rhs, J, f, target):
    """Newton iterations on plain floats; numpy call overhead dominates at 3x3."""
    (j00, j01, j02), (j10, j11, j12), (j20, j21, j22) = J
    r0, r1, r2 = rhs
    f0, f1, f2 = f
    rn = math.inf
    for it in range(MAX_NEWTON_ITERATIONS + 1):
        g0 = j00 * f0 + j01 * f1 + j02 * f2
        g1 = j10 * f0 + j11 * f1 + j12 * f2
        g2 = j20 * f0 + j21 * f1 + j22 * f2
        c0 = f1 * g2 - f2 * g1
        c1 = f2 * g0 - f0 * g2
        c2 = f0 * g1 - f1 * g0
        a, b, da, db = _coefficients(math.sqrt(f0 * f0 + f1 * f1 + f2 * f2))
        e0 = a * g0 + b * c0 - r0
        e1 = a * g1 + b * c1 - r1
        e2 = a * g2 + b * c2 - r2
        rn = math.sqrt(e0 * e0 + e1 * e1 + e2 * e2)
        if rn <= target or it == MAX_NEWTON_ITERATIONS:
            break
        # d/df [a J f + b f x J f]
        u0, u1, u2 = da * f0, da * f1, da * f2
        v0, v1, v2 = db * f0, db * f1, db * f2
        m00 = a * j00 + g0 * u0 + b * (f1 * j20 - f2 * j10) + c0 * v0
        m01 = a * j01 + g0 * u1 + b * (f1 * j21 - f2 * j11 + g2) + c0 * v1
        m02 = a * j02 + g0 * u2 + b * (f1 * j22 - f2 * j12 - g1) + c0 * v2
        m10 = a * j10 + g1 * u0 + b * (f2 * j00 - f0 * j20 - g2) + c1 * v0
        m11 = a * j11 + g1 * u1 + b * (f2 * j01 - f0 * j21) + c1 * v1
        m12 = a * j12 + g1 * u2 + b * (f2 * j02 - f0 * j22 + g0) + c1 * v2
        m20 = a * j20 + g2 * u0 + b * (f0 * j10 - f1 * j00 + g1) + c2 * v0
        m21 = a * j21 + g2 * u1 + b * (f0 * j11 - f1 * j01 - g0) + c2 * v1
        m22 = a * j22 + g2 * u2 + b * (f0 * j12 - f1 * j02) + c2 * v2
        k00 = m11 * m22 - m12 * m21
        k01 = m02 * m21 - m01 * m22
        k02 = m01 * m12 - m02 * m11
        det = m00 * k00 + m10 * k01 + m20 * k02
        if det == 0.0 or not math.isfinite(det):
            break
        k10 = m12 * m20 - m10 * m22
        k11 = m00 * m22 - m02 * m20
        k12 = m02 * m10 - m00 * m12
        k20 = m10 * m21 - m11 * m20
        k21 = m01 * m20 - m00 * m21
        k22 = m00 * m11 - m01 * m10
        f0 -= (k00 * e0 + k01 * e1 + k02 * e2) / det
        f1 -= (k10 * e0 + k11 * e1 + k12 * e2) / det
        f2 -= (k20 * e0 + k21 * e1 + k22 * e2) / det
    return (f0, f1, f2), it, rn


def solve_implicit_step(rhs, inertia: InertiaParams, tol: float = 1e-12) -> StepSolution:
    """Solve ``a(|f|) J f + b(|f|) f x J f = rhs`` for the relative rotation ``f``.

    ``rhs`` is ``h (J w_k + h/2 M_k)``; ``a = sin t/t`` and
    ``b = (1 - cos t)/t^2`` at ``t = |f|``. The left side equals
    ``vee(F J_d - J_d F^T)``. Newton iterations start from ``J^{-1} rhs``
    and stop once the residual is below ``tol * max(1, |rhs|)``.

    Raises:
        IntegratorError: if the step is too large for the principal branch
            (``|J^{-1} rhs| >= pi/2``) or Newton fails to converge.
    """
    rhs = np.asarray(rhs, dtype=float)
    f0 = inertia.J_inv @ rhs
    if not _norm(f0) < 0.5 * math.pi:
        raise IntegratorError("integration step too large for the principal solution branch")
    target = tol * max(1.0, _norm(rhs))
    f, it, rn = _newton_floats(rhs.tolist(), inertia.J.tolist(), f0.tolist(), target)
    if not rn <= target:
        raise IntegratorError(
            f"Newton iteration did not converge in {it} iterations (residual {rn:.3e})",
            iterations=it,
            residual=rn,
        )
    f = np.array(f)
    return StepSolution(f, exp_so3(f), it, rn)


def integrator_step(
    state: AttitudeState, inertia: InertiaParams, potential: Potential, moment=None
) -> AttitudeState:
    """Advance ``state`` by one step of the variational integrator.

    ``moment`` may carry the already known ``M_k`` to skip its evaluation.
    """
    C1, w1, _ = _step_arrays(state.C, state.omega, inertia, potential, moment)
    return AttitudeState._unchecked(C1, w1)


def _step_arrays(C, omega, inertia, potential, M=None):
    h, J = inertia.h, inertia.J
    if M is None:
        M = moment_from_potential(C, potential)
    Jw = J @ omega
    sol = solve_implicit_step(h * (Jw + 0.5 * h * M), inertia)
    F = sol.F
    C1 = C @ F
    M1 = moment_from_potential(C1, potential)
    w1 = inertia.J_inv @ (F.T @ (Jw + 0.5 * h * M) + 0.5 * h * M1)
    return C1, w1, M1


def propagate(state: AttitudeState, inertia: InertiaParams, potential: Potential, n_steps: int) -> list[AttitudeState]:
    """Trajectory of ``n_steps`` integrator steps, including the initial state."""
    C, w = np.array(state.C), np.array(state.omega)
    M = moment_from_potential(C, potential)
    out = [state]
    for k in range(n_steps):
        try:
            C, w, M = _step_arrays(C, w, inertia, potential, M)
        except IntegratorError as exc:
            exc.args = (f"step {k}: {exc.args[0]}",)
            raise
        out.append(AttitudeState._unchecked(C, w))
    return out


def continuous_derivative(state: AttitudeState, inertia: InertiaParams, potential: Potential):
    """Right-hand sides ``(C hat(w), J^{-1}(M - w x J w))`` of the continuous equations."""
    C, w, J = state.C, state.omega, inertia.J
    M = moment_from_potential(C, potential)
    return C @ hat(w), np.linalg.solve(J, M - _cross(w, J @ w))


def total_energy(state: AttitudeState, inertia: InertiaParams, potential: Potential) -> float:
    w = state.omega
    return 0.5 * float(w @ inertia.J @ w) + potential.value(state.C)
