"""Independent reference computations used by the tests.

Nothing here imports the package's solvers; the helpers only share the
plain data types so results can be compared directly.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def uniform_rotations(n: int, rng) -> np.ndarray:
    """``(n, 3, 3)`` rotations uniform under the Haar measure.

    Arvo's subgroup construction: a uniform rotation about z followed by a
    Householder reflection that sends z to a uniform point on the sphere.
    """
    x1, x2, x3 = rng.random((3, n))
    theta = 2.0 * math.pi * x1
    phi = 2.0 * math.pi * x2
    z = x3
    c, s = np.cos(theta), np.sin(theta)
    R = np.zeros((n, 3, 3))
    R[:, 0, 0], R[:, 0, 1] = c, s
    R[:, 1, 0], R[:, 1, 1] = -s, c
    R[:, 2, 2] = 1.0
    v = np.stack([np.cos(phi) * np.sqrt(z), np.sin(phi) * np.sqrt(z), np.sqrt(1.0 - z)], axis=1)
    H = np.eye(3) - 2.0 * v[:, :, None] * v[:, None, :]
    return -H @ R


def random_rotation(rng) -> np.ndarray:
    return uniform_rotations(1, rng)[0]


def expm_series(A, terms: int = 30) -> np.ndarray:
    """Truncated power series of the matrix exponential."""
    A = np.asarray(A, dtype=float)
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    return out


def random_spd(n: int, rng, eps: float = 0.1, scale: float = 1.0) -> np.ndarray:
    A = rng.standard_normal((n, n))
    return scale * (A @ A.T + eps * np.eye(n))


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def charpoly_roots(A, B, grid: int = 20000) -> np.ndarray:
    """Roots of ``det(A B - lam I)`` by sign-change bracketing and Brent's method."""
    M = np.asarray(A) @ np.asarray(B)
    n = M.shape[0]
    ea, eb = np.linalg.eigvalsh(A), np.linalg.eigvalsh(B)
    lo, hi = 0.5 * ea[0] * eb[0], 2.0 * ea[-1] * eb[-1]

    def f(lam):
        return np.linalg.det(M - lam * np.eye(n))

    xs = np.geomspace(lo, hi, grid)
    vals = np.array([f(x) for x in xs])
    roots = []
    for i in range(grid - 1):
        if vals[i] == 0.0:
            roots.append(xs[i])
        elif vals[i] * vals[i + 1] < 0.0:
            roots.append(brentq(f, xs[i], xs[i + 1], xtol=1e-14 * xs[i], rtol=1e-15))
    return np.array(roots)


def reference_trajectory(C0, w0, J, moment_fn, t_end: float, times) -> list[tuple[np.ndarray, np.ndarray]]:
    """High-accuracy solution of ``C' = C hat(w)``, ``J w' + w x J w = M(C)``.

    ``moment_fn`` maps ``C`` to the body-frame moment. Uses an adaptive
    8th-order Runge-Kutta method at tolerance 1e-12.
    """
    J = np.asarray(J, dtype=float)
    J_inv = np.linalg.inv(J)

    def rhs(_, y):
        C = y[:9].reshape(3, 3)
        w = y[9:]
        dC = C @ skew(w)
        dw = J_inv @ (moment_fn(C) - np.cross(w, J @ w))
        return np.concatenate([dC.ravel(), dw])

    y0 = np.concatenate([np.asarray(C0, dtype=float).ravel(), np.asarray(w0, dtype=float)])
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", rtol=1e-12, atol=1e-12, t_eval=times)
    if not sol.success:
        raise RuntimeError(sol.message)
    return [(sol.y[:9, i].reshape(3, 3), sol.y[9:, i]) for i in range(sol.y.shape[1])]


def pendulum_moment(mass: float, gravity: float, rho):
    """Moment of the weight ``m g C^T e3`` applied at ``rho``, in the body frame."""
    rho = np.asarray(rho, dtype=float)

    def M(C):
        return mass * gravity * np.cross(rho, np.asarray(C)[2, :])

    return M


def geodesic(C1, C2) -> float:
    """Rotation angle of ``C1^T C2`` from its trace and antisymmetric part."""
    R = np.asarray(C1).T @ np.asarray(C2)
    c = 0.5 * (np.trace(R) - 1.0)
    s = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return math.atan2(s, c)
