"""Successor features and the Van der Waals diversity signal."""

from __future__ import annotations

import numpy as np

from .mdp import ValidationError

VDW_QUAD = 0.5
VDW_QUINT = 0.2


def successor_features(w: np.ndarray, features: np.ndarray) -> np.ndarray:
    """psi = sum_j w_j phi(s_j); `features` is the per-record feature matrix [N, d]."""
    w = np.asarray(w, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != w.shape[0]:
        raise ValidationError("features must be [len(w), d]")
    return w @ features


def pairwise_distances(psis) -> np.ndarray:
    psis = np.asarray(psis, dtype=np.float64)
    diff = psis[:, None, :] - psis[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def nearest_rival(psis, i: int) -> tuple[int, float]:
    """argmin_{j != i} ||psi_i - psi_j||, ties broken by the lowest index."""
    psis = np.asarray(psis, dtype=np.float64)
    if psis.shape[0] < 2:
        raise ValidationError("nearest rival needs at least two skills")
    dist = np.linalg.norm(psis - psis[i], axis=1)
    dist[i] = np.inf
    j = int(np.argmin(dist))  # argmin returns the first minimum
    return j, float(dist[j])


def nearest_rivals(psis) -> tuple[np.ndarray, np.ndarray]:
    psis = np.asarray(psis, dtype=np.float64)
    D = pairwise_distances(psis)
    np.fill_diagonal(D, np.inf)
    j = D.argmin(axis=1)
    return j, D[np.arange(len(j)), j]


def vdw_coefficient(ell: float, ell0: float) -> float:
    if ell0 <= 0:
        raise ValidationError("ell0 must be positive")
    return 1.0 - (ell / ell0) ** 3


def vdw_reward(features_of_s, psi_i, psi_rival, ell, ell0) -> np.ndarray | float:
    """(1 - (ell/ell0)^3) <phi(s), psi_i - psi_rival>; phi(s) may be a single vector or a stack [.., d]."""
    psi_i = np.asarray(psi_i, dtype=np.float64)
    psi_rival = np.asarray(psi_rival, dtype=np.float64)
    coef = vdw_coefficient(ell, ell0)
    if abs(np.linalg.norm(psi_i - psi_rival) - ell) > 1e-9:
        raise ValidationError("ell must equal ||psi_i - psi_rival||")
    out = coef * (np.asarray(features_of_s, dtype=np.float64) @ (psi_i - psi_rival))
    return float(out) if np.ndim(out) == 0 else out


def vdw_term(ell, ell0):
    return VDW_QUAD * ell**2 - VDW_QUINT * ell**5 / ell0**3


def vdw_objective(psis, ell0: float) -> float:
    """sum_i 0.5 l_i^2 - 0.2 l_i^5 / l0^3 with l_i the nearest-rival distance of skill i."""
    if ell0 <= 0:
        raise ValidationError("ell0 must be positive")
    if len(psis) < 2:
        raise ValidationError("VdW objective needs at least two skills")
    _, ell = nearest_rivals(psis)
    return float(np.sum(vdw_term(ell, ell0)))


def repulsive_objective(psis) -> float:
    """0.5 sum_i min_{j != i} ||psi_i - psi_j||^2."""
    if len(psis) < 2:
        raise ValidationError("repulsive objective needs at least two skills")
    _, ell = nearest_rivals(psis)
    return float(0.5 * np.sum(ell**2))


def diversity_gradient(Phi: np.ndarray, d_i: np.ndarray, d_j: np.ndarray) -> np.ndarray:
    """Gradient of 0.5 ||Phi d_i - Phi d_j||^2 in d_i, i.e. Phi^T (psi_i - psi_j)."""
    Phi = np.asarray(Phi, dtype=np.float64)
    d_i = np.ravel(d_i)
    d_j = np.ravel(d_j)
    if Phi.ndim != 2 or Phi.shape[1] != d_i.shape[0] or d_i.shape != d_j.shape:
        raise ValidationError("Phi must be [d, |S||A|] and match the occupancies")
    return Phi.T @ (Phi @ d_i - Phi @ d_j)


def vdw_point_gradients(psis, ell0: float) -> np.ndarray:
    """Per-skill ascent directions (1 - (l_i/l0)^3)(psi_i - psi_j*) with the rival held fixed."""
    psis = np.asarray(psis, dtype=np.float64)
    j, ell = nearest_rivals(psis)
    coef = 1.0 - (ell / ell0) ** 3
    return coef[:, None] * (psis - psis[j])


def simulate_vdw_points(psis, ell0: float, step: float, num_steps: int):
    """Gradient ascent of every point on its own VdW term; returns final points and nearest-rival distances."""
    pts = np.array(psis, dtype=np.float64)
    for _ in range(num_steps):
        pts = pts + step * vdw_point_gradients(pts, ell0)
    return pts, nearest_rivals(pts)[1]
