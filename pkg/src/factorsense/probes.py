"""Trajectory diagnostics: the adaptively propagated signal subspace, the
signal/error split of the iterate, the basis-aligned split of the signal, and
the scalars tracked along a run.

The signal subspace starts at the column span of the planted eigenbasis and
is pushed forward through the same linear map that updates the iterate:

    S_0 = span(ustar),   S_t = (I - eta * M_{t-1}) . S_{t-1}

The iterate then splits into a signal part inside S_t and an error part in
its complement.  Inequality checks on the tracked scalars are logged as
flags, never asserted: their sharp constants are not pinned down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matkit import (as_matrix, principal_angle_sin, pseudo_inverse,
                     spectral_norm)
from .sensing import GroundTruth

RANK_DEFICIENT_TOL = 1e-10


@dataclass(frozen=True)
class SubspaceState:
    """Orthonormal basis of the propagated signal subspace at iteration t."""

    basis: np.ndarray
    t: int
    degenerate: bool = False   # eta * ||M|| >= 1 seen at some advance
    collapsed: bool = False    # numerical dimension collapse at some advance

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def subspace_start(gt: GroundTruth) -> SubspaceState:
    return SubspaceState(basis=gt.ustar.copy(), t=0)


def advance_subspace(state: SubspaceState, m_mat, eta: float) -> SubspaceState:
    """Push the subspace through I - eta*M and re-orthonormalize (QR).

    The map is injective when eta*||M|| < 1, so the image spans exactly
    (I - eta*M) . S; otherwise the state is flagged as degenerate.  A
    numerically collapsed dimension is also flagged.
    """
    m = as_matrix(m_mat)
    mapped = state.basis - eta * (m @ state.basis)
    q, r = np.linalg.qr(mapped)
    diag = np.abs(np.diag(r))
    collapsed = bool(state.collapsed or np.min(diag) <= 1e-14 * max(1.0, np.max(diag)))
    degenerate = bool(state.degenerate or eta * spectral_norm(m) >= 1.0)
    return SubspaceState(basis=q, t=state.t + 1,
                         degenerate=degenerate, collapsed=collapsed)


@dataclass(frozen=True)
class ZESplit:
    """U = signal + error with signal inside the tracked subspace."""

    signal: np.ndarray
    error: np.ndarray


def split_ze(u, state: SubspaceState) -> ZESplit:
    a = as_matrix(u)
    b = state.basis
    signal = b @ (b.T @ a)
    return ZESplit(signal=signal, error=a - signal)


@dataclass(frozen=True)
class FRSplit:
    """signal = (ustar + offset) @ coeffs, with ustar^T offset = 0.

    coeffs is the planted-basis coordinate matrix of the signal and offset
    measures how far the signal span has drifted from the planted span
    (its spectral norm is, to third order, the principal-angle sine).
    """

    coeffs: np.ndarray           # r x k
    offset: np.ndarray           # d x r
    rank_deficient: bool


def split_fr(z, gt: GroundTruth) -> FRSplit:
    a = as_matrix(z)
    coeffs = gt.ustar.T @ a
    sig = np.linalg.svd(coeffs, compute_uv=False)
    rank_deficient = bool(sig.size == 0 or sig[-1] <= RANK_DEFICIENT_TOL)
    complement = a - gt.ustar @ coeffs
    offset = complement @ pseudo_inverse(coeffs)
    return FRSplit(coeffs=coeffs, offset=offset, rank_deficient=rank_deficient)


def split_rank1(u, gt: GroundTruth) -> tuple[np.ndarray, np.ndarray]:
    """Rank-1 convention: signal coefficients U^T u* and complement error."""
    if gt.r != 1:
        raise ValueError("rank-1 split needs a rank-1 ground truth")
    a = as_matrix(u)
    uv = gt.uvec
    coeffs = a.T @ uv
    error = a - np.outer(uv, coeffs)
    return coeffs, error


@dataclass(frozen=True)
class DiagRecord:
    """Per-checkpoint diagnostic scalars and logged inequality flags."""

    t: int
    sigma_rp1: float         # (r+1)-th singular value of the iterate
    sin_zu: float            # principal-angle sine between signal and ustar
    norm_E: float            # spectral norm of the error part
    sigmin_R: float          # least singular value of ustar^T signal
    norm_Z: float            # spectral norm of the signal part
    norm_F: float            # spectral norm of the span-drift offset
    r1_signal: float | None = None   # ||U^T u*|| when the target is rank 1
    r1_error: float | None = None    # spectral norm of the rank-1 error part
    # Logged flags (None when inapplicable at this checkpoint):
    error_bounded: bool | None = None    # norm_E <= 4 * norm_E at t=0
    signal_dominates: bool | None = None  # sigmin_R >= norm_E
    z_bounded: bool | None = None         # norm_Z <= 5
    sin_small: bool | None = None         # sin_zu <= 1/3
    sandwich_ok: bool | None = None       # offset-vs-sine sandwich, ||F|| < 1/3
    subspace_degenerate: bool = False


def sine_offset_sandwich(norm_f: float, sin_zu: float,
                         tol: float = 1e-8) -> bool | None:
    """||F|| - ||F||^3 <= sin <= ||F||, checked only when ||F|| < 1/3."""
    if not np.isfinite(norm_f) or not np.isfinite(sin_zu) or norm_f >= 1.0 / 3.0:
        return None
    return bool(norm_f - norm_f**3 - tol <= sin_zu <= norm_f + tol)


def diagnostics(u, state: SubspaceState, gt: GroundTruth,
                norm_e0: float | None = None) -> DiagRecord:
    """Compute the full diagnostic record for one checkpoint.

    Degrades to flags instead of raising: a rank-deficient signal yields NaN
    angles rather than an error.
    """
    a = as_matrix(u)
    ze = split_ze(a, state)
    fr = split_fr(ze.signal, gt)

    sing = np.linalg.svd(a, compute_uv=False)
    sigma_rp1 = float(sing[gt.r]) if sing.size > gt.r else 0.0

    sig_norm = spectral_norm(ze.signal)
    if sig_norm <= RANK_DEFICIENT_TOL:
        sin_zu = float("nan")
    else:
        sin_zu = principal_angle_sin(ze.signal, gt.ustar)

    norm_e = spectral_norm(ze.error)
    csig = np.linalg.svd(fr.coeffs, compute_uv=False)
    sigmin_r = float(csig[-1]) if csig.size else 0.0
    norm_f = spectral_norm(fr.offset) if not fr.rank_deficient else float("nan")

    r1_signal = r1_error = None
    if gt.r == 1:
        coeffs, err = split_rank1(a, gt)
        r1_signal = float(np.linalg.norm(coeffs))
        r1_error = spectral_norm(err)

    return DiagRecord(
        t=state.t,
        sigma_rp1=sigma_rp1,
        sin_zu=sin_zu,
        norm_E=norm_e,
        sigmin_R=sigmin_r,
        norm_Z=sig_norm,
        norm_F=norm_f,
        r1_signal=r1_signal,
        r1_error=r1_error,
        error_bounded=None if norm_e0 is None else bool(norm_e <= 4.0 * norm_e0),
        signal_dominates=bool(sigmin_r >= norm_e),
        z_bounded=bool(sig_norm <= 5.0),
        sin_small=None if not np.isfinite(sin_zu) else bool(sin_zu <= 1.0 / 3.0),
        sandwich_ok=sine_offset_sandwich(norm_f, sin_zu),
        subspace_degenerate=state.degenerate,
    )


class SubspaceTracker:
    """Opt-in probe attached to a solver run.

    The solver calls observe() once per step with the update matrix M_t (to
    push the subspace forward) and diagnostics() at each checkpoint.
    """

    def __init__(self, gt: GroundTruth, eta: float):
        self.gt = gt
        self.eta = float(eta)
        self.state = subspace_start(gt)
        self.norm_e0: float | None = None

    def observe(self, u, m_mat) -> None:
        self.state = advance_subspace(self.state, m_mat, self.eta)

    def diagnostics(self, t: int, u) -> DiagRecord:
        if self.state.t != t:
            raise RuntimeError(
                f"subspace is at iteration {self.state.t}, checkpoint is {t}")
        rec = diagnostics(u, self.state, self.gt, norm_e0=self.norm_e0)
        if t == 0:
            self.norm_e0 = rec.norm_E
        return rec
