"""Rotation-group and small dense matrix primitives.

Vectors are ``(3,)`` arrays, rotations ``(3, 3)`` arrays. Everything here is a
pure function of its inputs.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateGeometryError

_SMALL_ANGLE = 1e-6
_NEAR_PI_COS = -0.99


def hat(v) -> np.ndarray:
    """Skew matrix such that ``hat(v) @ y == np.cross(v, y)``."""
    x, y, z = (float(c) for c in v)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(A, tol: float = 1e-9) -> np.ndarray:
    """Inverse of :func:`hat`.

    The input is symmetrized as ``(A - A.T) / 2`` first; a symmetric part
    larger than ``tol`` (relative to ``max(1, |A|)``) is rejected.
    """
    A = np.asarray(A, dtype=float)
    sym = 0.5 * (A + A.T)
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(sym)) > tol * scale:
        raise ValueError("matrix is not skew-symmetric")
    S = 0.5 * (A - A.T)
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def _rodrigues_coeffs(theta: float) -> tuple[float, float]:
    """Return ``sin(t)/t`` and ``(1 - cos(t))/t**2``."""
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    return math.sin(theta) / theta, 2.0 * math.sin(0.5 * theta) ** 2 / (theta * theta)


def exp_so3(f) -> np.ndarray:
    """Rotation matrix ``expm(hat(f))`` by the Rodrigues formula."""
    f = np.asarray(f, dtype=float)
    a, b = _rodrigues_coeffs(float(np.linalg.norm(f)))
    K = hat(f)
    return np.eye(3) + a * K + b * (K @ K)


def _canonical_axis(axis: np.ndarray) -> np.ndarray:
    for c in axis:
        if abs(c) > 1e-12:
            return axis if c > 0 else -axis
    return axis


def log_so3(C) -> np.ndarray:
    """Principal rotation vector of ``C`` (norm at most pi).

    At exactly pi the axis sign is ambiguous; the axis whose first non-zero
    component is positive is returned.
    """
    C = np.asarray(C, dtype=float)
    s = 0.5 * np.array([C[2, 1] - C[1, 2], C[0, 2] - C[2, 0], C[1, 0] - C[0, 1]])
    sin_t = float(np.linalg.norm(s))
    cos_t = 0.5 * (float(np.trace(C)) - 1.0)
    theta = math.atan2(sin_t, cos_t)
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        return s * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0)
    if cos_t > _NEAR_PI_COS:
        return s * (theta / sin_t)

    # Near pi the antisymmetric part vanishes; read the axis off the symmetric part.
    outer = (0.5 * (C + C.T) - cos_t * np.eye(3)) / (1.0 - cos_t)
    j = int(np.argmax(np.diag(outer)))
    axis = outer[:, j] / math.sqrt(max(outer[j, j], 1e-300))
    axis /= np.linalg.norm(axis)
    if math.pi - theta < 1e-9:
        axis = _canonical_axis(axis)
    elif float(axis @ s) < 0.0:
        axis = -axis
    return theta * axis


def geodesic_distance(C1, C2) -> float:
    """Rotation angle of ``C1.T @ C2``."""
    return float(np.linalg.norm(log_so3(np.asarray(C1).T @ np.asarray(C2))))


def is_rotation(C, tol: float = 1e-9) -> bool:
    C = np.asarray(C, dtype=float)
    if C.shape != (3, 3) or not np.all(np.isfinite(C)):
        return False
    return bool(np.linalg.norm(C.T @ C - np.eye(3)) <= tol and np.linalg.det(C) > 0)


def spd_sqrt(M) -> np.ndarray:
    """Principal (symmetric positive definite) square root."""
    M = np.asarray(M, dtype=float)
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    if w[0] <= 1e-14 * w[-1] or w[-1] <= 0.0:
        raise np.linalg.LinAlgError("matrix is not numerically positive definite")
    R = (V * np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)


def spd_inv_sqrt(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    if w[0] <= 1e-14 * w[-1] or w[-1] <= 0.0:
        raise np.linalg.LinAlgError("matrix is not numerically positive definite")
    R = (V / np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)


def is_spd(M, sym_tol: float = 1e-12) -> bool:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or not np.all(np.isfinite(M)):
        return False
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > sym_tol * scale:
        return False
    try:
        np.linalg.cholesky(0.5 * (M + M.T))
    except np.linalg.LinAlgError:
        return False
    return True


def qr_positive(L) -> tuple[np.ndarray, np.ndarray]:
    """QR factorization ``L = Q @ R`` with ``Q`` a proper rotation.

    ``R`` is first normalized to a positive diagonal. If that leaves
    ``det(Q) = -1``, the last column of ``Q`` and last row of ``R`` are
    negated, so in that case ``R[2, 2] < 0``.

    Raises:
        DegenerateGeometryError: ``L`` is singular or nearly so.
    """
    L = np.asarray(L, dtype=float)
    norm = float(np.linalg.norm(L, 2))
    if not np.all(np.isfinite(L)) or abs(np.linalg.det(L)) <= 1e-12 * norm**3:
        raise DegenerateGeometryError("degenerate direction geometry: attitude profile is singular")
    Q, R = np.linalg.qr(L)
    d = np.where(np.diag(R) < 0.0, -1.0, 1.0)
    Q = Q * d
    R = d[:, None] * R
    if np.linalg.det(Q) < 0.0:
        Q[:, 2] = -Q[:, 2]
        R[2, :] = -R[2, :]
    return Q, R


def diagonalize_spd_product(A, B) -> tuple[np.ndarray, np.ndarray]:
    """Diagonalize the product of two SPD matrices.

    Returns ``V`` and the eigenvalues ``lam`` (ascending, all positive) with
    ``A @ B == inv(V) @ diag(lam) @ V``. ``V = Q.T @ A^{-1/2}`` where ``Q``
    holds the eigenvectors of ``A^{1/2} B A^{1/2}``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ValueError("A and B must be square matrices of equal size")
    A_half = spd_sqrt(A)
    M = A_half @ B @ A_half
    lam, Q = np.linalg.eigh(0.5 * (M + M.T))
    V = Q.T @ spd_inv_sqrt(A)
    return V, lam
