"""Static attitude determination from weighted direction observations.

The reference directions ``E`` (inertial frame) and the measured directions
``B`` (body frame) are ``(3, m)`` arrays of unit columns. The attitude
``C`` maps body vectors to the reference frame, ``e_i = C @ b_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError
from .so3 import qr_positive, spd_sqrt


def _unit_columns(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != 3:
        raise ValueError(f"{name} must have shape (3, m)")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(np.abs(np.linalg.norm(X, axis=0) - 1.0) > 1e-12):
        raise ValueError(f"columns of {name} must have unit norm")
    return X


@dataclass(frozen=True)
class DirectionSet:
    """Known reference directions and their weights.

    Attributes:
        E: ``(3, m)`` unit reference directions.
        weights: ``(m,)`` positive weights; defaults to ones.
    """

    E: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        E = _unit_columns(self.E, "E")
        m = E.shape[1]
        w = np.ones(m) if self.weights is None else np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape != (m,):
            raise ValueError("weights must have one entry per direction")
        if np.any(~np.isfinite(w)) or np.any(w <= 0.0):
            raise ValueError("weights must be positive")
        G = np.abs(E.T @ E)
        np.fill_diagonal(G, 0.0)
        if m > 1 and G.max() >= 1.0 - 1e-9:
            raise DegenerateGeometryError("degenerate direction geometry: parallel reference directions")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return self.E.shape[1]


def check_observations(B, m: int | None = None) -> np.ndarray:
    """Validate a ``(3, m)`` array of measured unit directions."""
    B = _unit_columns(B, "B")
    if m is not None and B.shape[1] != m:
        raise ValueError(f"expected {m} observed directions, got {B.shape[1]}")
    return B


def wahba_cost(C_hat, dirs: DirectionSet, B) -> float:
    """Weighted misfit ``1/2 sum_i w_i |e_i - C_hat b_i|^2``."""
    R = dirs.E - np.asarray(C_hat, dtype=float) @ np.asarray(B, dtype=float)
    return 0.5 * float(np.sum(dirs.weights * np.sum(R * R, axis=0)))


def build_profile(dirs: DirectionSet, B) -> np.ndarray:
    """Attitude profile ``L = E diag(w) B^T``."""
    B = np.asarray(B, dtype=float)
    if B.shape != dirs.E.shape:
        raise ValueError("observations and reference directions differ in shape")
    return (dirs.E * dirs.weights) @ B.T


def solve_wahba(L) -> np.ndarray:
    """Optimal attitude for the profile ``L`` via a QR factorization.

    With ``L = Q R`` the estimate is ``S @ L`` where
    ``S = Q sqrt(inv(R R^T)) Q^T``, i.e. the orthogonal polar factor of ``L``.

    Raises:
        DegenerateGeometryError: ``L`` is near-singular (condition worse than
            1e8) or has negative determinant, in which case the polar factor
            is a reflection and no proper rotation satisfies the optimality
            condition with ``S`` positive definite.
    """
    L = np.asarray(L, dtype=float)
    sv = np.linalg.svd(L, compute_uv=False)
    if not np.all(np.isfinite(sv)) or sv[-1] < 1e-8 * sv[0]:
        raise DegenerateGeometryError("degenerate direction geometry: attitude profile is ill-conditioned")
    if np.linalg.det(L) <= 0.0:
        raise DegenerateGeometryError("degenerate direction geometry: attitude profile is improper (det L <= 0)")
    Q, R = qr_positive(L)
    S = Q @ spd_sqrt(np.linalg.inv(R @ R.T)) @ Q.T
    return S @ L


def optimality_residual(C_hat, L) -> np.ndarray:
    """``L^T C - C^T L``; vanishes at a stationary attitude."""
    C_hat = np.asarray(C_hat, dtype=float)
    L = np.asarray(L, dtype=float)
    return L.T @ C_hat - C_hat.T @ L


def augment_pair(dirs: DirectionSet, B) -> tuple[DirectionSet, np.ndarray]:
    """Turn a two-direction problem into a three-direction one.

    The normalized cross products ``e1 x e2`` and ``b1 x b2`` are appended;
    the synthetic direction gets weight ``min(w1, w2)``.
    """
    B = check_observations(B, 2)
    if dirs.m != 2:
        raise ValueError("augment_pair needs exactly two directions")
    e3 = np.cross(dirs.E[:, 0], dirs.E[:, 1])
    b3 = np.cross(B[:, 0], B[:, 1])
    ne, nb = np.linalg.norm(e3), np.linalg.norm(b3)
    if ne < 1e-9 or nb < 1e-9:
        raise DegenerateGeometryError("degenerate direction geometry: parallel direction pair")
    E = np.column_stack([dirs.E, e3 / ne])
    w = np.append(dirs.weights, min(dirs.weights))
    return DirectionSet(E, w), np.column_stack([B, b3 / nb])
