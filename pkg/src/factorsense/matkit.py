"""Dense linear-algebra kernel shared by every other module.

All operations are pure functions on 64-bit float matrices, reject non-finite
input at the boundary, and are deterministic for a fixed input.  Intended for
dense matrices up to roughly 10^3 x 10^3.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

DEFAULT_RANK_TOL = 1e-12


def as_matrix(m) -> np.ndarray:
    """Validate and return a 2-D float64 array with finite entries."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains NaN or Inf entries")
    return a


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD: left @ diag(singulars) @ right.T reconstructs the input."""

    left: np.ndarray
    singulars: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singulars) @ self.right.T


def svd(m) -> SvdResult:
    a = as_matrix(m)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return SvdResult(left=u, singulars=s, right=vt.T)


class Norms(NamedTuple):
    spectral: float
    frobenius: float
    nuclear: float


def norms(m) -> Norms:
    """Spectral, Frobenius and nuclear norms from the singular values."""
    a = as_matrix(m)
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0:
        return Norms(0.0, 0.0, 0.0)
    return Norms(float(s[0]), float(np.sqrt(np.sum(s * s))), float(np.sum(s)))


def spectral_norm(m) -> float:
    a = as_matrix(m)
    s = np.linalg.svd(a, compute_uv=False)
    return float(s[0]) if s.size else 0.0


def pseudo_inverse(m, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse.

    Singular values below rank_tol * sigma_max are treated as zero; the
    all-zero matrix maps to the all-zero matrix.
    """
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    res = svd(m)
    s = res.singulars
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((m.shape[1], m.shape[0]))
    keep = s > rank_tol * s[0]
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (res.right * inv) @ res.left.T


def orthonormal_basis(m, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column span; zero columns for rank 0."""
    res = svd(m)
    s = res.singulars
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((as_matrix(m).shape[0], 0))
    keep = s > rank_tol * s[0]
    return res.left[:, keep]


def col_projector(m, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthogonal projector onto the column span of m."""
    a = as_matrix(m)
    q = orthonormal_basis(a, rank_tol)
    if q.shape[1] == 0:
        return np.zeros((a.shape[0], a.shape[0]))
    p = q @ q.T
    return (p + p.T) / 2.0


def numerical_rank(m, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    s = np.linalg.svd(as_matrix(m), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rank_tol * s[0]))


def principal_angle_sin(a, b, rank_tol: float = DEFAULT_RANK_TOL) -> float:
    """Sine of the largest principal angle between col(a) and col(b).

    Returns ||(I - P_b) Q_a||_2 where Q_a is an orthonormal basis of col(a);
    0 means col(a) is contained in col(b), 1 means some direction of col(a)
    is orthogonal to col(b).  Symmetric in its arguments when both spans
    have the same dimension.
    """
    qa = orthonormal_basis(a, rank_tol)
    qb = orthonormal_basis(b, rank_tol)
    if qa.shape[0] != qb.shape[0]:
        raise ValueError("row counts differ")
    if qa.shape[1] == 0 or qb.shape[1] == 0:
        raise ValueError("principal angles need nonzero spans")
    residual = qa - qb @ (qb.T @ qa)
    return float(min(1.0, spectral_norm(residual)))


def psd_project(m) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix.

    The input must be square and symmetric; asymmetry up to
    1e-10 * max(1, max|entry|) is folded away, anything larger is rejected.
    Eigenvalues are clamped at zero.
    """
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError("psd_project needs a square matrix")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > 1e-10 * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    sym = (a + a.T) / 2.0
    w, v = np.linalg.eigh(sym)
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.T
    return (out + out.T) / 2.0
