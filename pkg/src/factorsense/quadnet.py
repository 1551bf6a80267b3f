"""One-hidden-layer quadratic-activation network, seen as rank-1 matrix
sensing: the prediction ||U^T x||^2 equals <x x^T, U U^T>, so each input acts
as a rank-one measurement matrix of X = U U^T.

Rank-one measurements are heavy-tailed, so the trainer optimizes a truncated
empirical risk and re-scales the iterate each step to cancel the identity
drift that truncated rank-one averages pick up:

    U_half = U - eta * grad_truncated(U)
    U_next = U_half / (1 - eta * (||U||_F^2 - tau)),   tau = ||planted||_F^2

The plain stochastic trainer (no truncation, no rescaling) is also provided;
started from a large initialization it fits the training set without
generalizing, which is the baseline the rescaled trainer is compared against.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .matkit import as_matrix
from .rng import substream
from .sensing import (GroundTruth, KIND_QUAD_DATASET, _HEADER, _floats,
                      _pack_header, _read_header, _take)
from .solvers import Checkpoint, DivergenceError, Trajectory, checkpoint_schedule

GRAD_FACTOR = 4.0   # d/dU (||U^T x||^2 - y)^2 = 4 (yhat - y) x x^T U


class AllTruncatedWarning(UserWarning):
    """Every example fell outside the truncation radius."""


class RescaleError(RuntimeError):
    """The rescaling denominator vanished; the step is undefined."""


@dataclass(frozen=True)
class QuadDataset:
    """n Gaussian inputs with labels y_i = x_i^T X* x_i (all non-negative)."""

    d: int
    n: int
    inputs: np.ndarray   # (n, d)
    labels: np.ndarray   # (n,)
    seed: int

    def __post_init__(self):
        self.inputs.setflags(write=False)
        self.labels.setflags(write=False)


@dataclass(frozen=True)
class QuadConfig:
    init_scale: float
    step_size: float
    n_steps: int
    seed: int = 0
    init_basis: str = "identity"
    record_every: int = 100
    rcut: Optional[float] = None       # None resolves to 20 * log(d)
    tau_mode: str = "exact"            # "exact" or "estimated"

    def __post_init__(self):
        if not (self.init_scale > 0 and math.isfinite(self.init_scale)):
            raise ValueError("init_scale must be positive and finite")
        if not (self.step_size > 0 and math.isfinite(self.step_size)):
            raise ValueError("step_size must be positive and finite")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.rcut is not None and self.rcut <= 0:
            raise ValueError("rcut must be positive")
        if self.tau_mode not in ("exact", "estimated"):
            raise ValueError(f"unknown tau_mode {self.tau_mode!r}")
        if self.init_basis not in ("identity", "haar"):
            raise ValueError(f"unknown init_basis {self.init_basis!r}")


def gen_quad_data(gt: GroundTruth, n: int, seed: int = 0) -> QuadDataset:
    if n < 1:
        raise ValueError("need at least one example")
    x = substream(seed, "quad-data").standard_normal((n, gt.d))
    labels = np.einsum("ij,jk,ik->i", x, gt.xstar, x)
    return QuadDataset(d=gt.d, n=n, inputs=x, labels=labels, seed=seed)


def predict(u, x) -> float:
    """Network output ||U^T x||^2; identical to <x x^T, U U^T>."""
    a = as_matrix(u)
    p = a.T @ np.asarray(x, dtype=np.float64)
    return float(p @ p)


def default_rcut(d: int) -> float:
    return 20.0 * math.log(d)


def _predictions(u: np.ndarray, data: QuadDataset) -> tuple[np.ndarray, np.ndarray]:
    proj = data.inputs @ u           # (n, k)
    yhat = np.einsum("ij,ij->i", proj, proj)
    return proj, yhat


def truncated_loss(u, data: QuadDataset, rcut: float) -> float:
    """Truncated empirical risk (1/n) sum (yhat_i - y_i)^2 1{yhat_i <= rcut}."""
    if rcut <= 0:
        raise ValueError("rcut must be positive")
    a = as_matrix(u)
    _, yhat = _predictions(a, data)
    mask = yhat <= rcut
    if not mask.any():
        warnings.warn("all examples truncated away", AllTruncatedWarning)
    resid = (yhat - data.labels) * mask
    return float(resid @ resid) / data.n


def truncated_gradient(u, data: QuadDataset, rcut: float) -> np.ndarray:
    """Gradient of the truncated risk, treating the indicator as constant.

    (4/n) sum_i (yhat_i - y_i) x_i x_i^T U 1{yhat_i <= rcut}; matches finite
    differences of truncated_loss whenever no example sits exactly on the
    truncation boundary.
    """
    if rcut <= 0:
        raise ValueError("rcut must be positive")
    a = as_matrix(u)
    proj, yhat = _predictions(a, data)
    mask = yhat <= rcut
    if not mask.any():
        warnings.warn("all examples truncated away", AllTruncatedWarning)
        return np.zeros_like(a)
    weights = (yhat - data.labels) * mask
    return GRAD_FACTOR * (data.inputs.T @ (weights[:, None] * proj)) / data.n


def tau_exact(gt: GroundTruth) -> float:
    """Squared Frobenius norm of the planted factor, i.e. trace(X*)."""
    return float(np.trace(gt.xstar))


def tau_estimated(data: QuadDataset) -> float:
    """Label mean; an unbiased estimate of trace(X*) for Gaussian inputs."""
    return float(np.mean(data.labels))


def algorithm1_step(u, data: QuadDataset, step_size: float, rcut: float,
                    tau: float) -> np.ndarray:
    """One truncated-gradient step followed by the trace-drift rescaling."""
    a = as_matrix(u)
    u_half = a - step_size * truncated_gradient(a, data, rcut)
    denom = 1.0 - step_size * (float(np.sum(a * a)) - tau)
    if abs(denom) <= 1e-12:
        raise RescaleError(f"rescaling denominator {denom:.3e} is numerically zero")
    return u_half / denom


def _quad_checkpoint(step, u, gt, data, rcut, probe=None) -> Checkpoint:
    x_hat = u @ u.T
    diff = x_hat - gt.xstar
    fro = float(np.linalg.norm(diff))
    _, yhat = _predictions(u, data)
    resid = yhat - data.labels
    train = float(np.linalg.norm(resid) / np.linalg.norm(data.labels))
    diag = probe.diagnostics(step, u) if probe is not None else None
    return Checkpoint(step=step, train_error=train,
                      test_error=fro / float(np.linalg.norm(gt.xstar)),
                      population_risk=fro * fro, diag=diag)


def _quad_init(gt: GroundTruth, cfg: QuadConfig) -> np.ndarray:
    if cfg.init_basis == "identity":
        basis = np.eye(gt.d)
    else:
        g = substream(cfg.seed, "init").standard_normal((gt.d, gt.d))
        q, r = np.linalg.qr(g)
        basis = q * np.sign(np.diag(r))
    return cfg.init_scale * basis


def run_algorithm1(gt: GroundTruth, data: QuadDataset, cfg: QuadConfig,
                   probe=None) -> Trajectory:
    """Train with the truncated, rescaled full-batch procedure.

    Records the relative training error over the dataset and the
    generalization error of U U^T against the planted matrix, on the same
    trajectory format as the sensing solvers.
    """
    t_start = time.perf_counter()
    rcut = cfg.rcut if cfg.rcut is not None else default_rcut(gt.d)
    tau = tau_exact(gt) if cfg.tau_mode == "exact" else tau_estimated(data)
    u = _quad_init(gt, cfg)
    schedule = set(checkpoint_schedule(cfg.n_steps, cfg.record_every))
    cap = 1e3 * max(1.0, float(np.linalg.norm(gt.xstar)) ** 0.5)

    checkpoints = [_quad_checkpoint(0, u, gt, data, rcut, probe)]
    traj = Trajectory(checkpoints, u, cfg, algorithm="quad-rescaled")
    for t in range(cfg.n_steps):
        if probe is not None:
            # the update matrix of the equivalent sensing view, before rescale
            proj, yhat = _predictions(u, data)
            weights = (yhat - data.labels) * (yhat <= rcut)
            m_mat = (data.inputs * weights[:, None]).T @ data.inputs / data.n
            probe.observe(u, m_mat)
        u = algorithm1_step(u, data, cfg.step_size, rcut, tau)
        step = t + 1
        if not np.all(np.isfinite(u)) or np.linalg.norm(u) > cap:
            traj.final_factor = u
            traj.wall_time = time.perf_counter() - t_start
            raise DivergenceError(step, traj)
        if step in schedule:
            checkpoints.append(_quad_checkpoint(step, u, gt, data, rcut, probe))
    traj.final_factor = u
    traj.wall_time = time.perf_counter() - t_start
    traj.validate()
    return traj


def run_quad_sgd(gt: GroundTruth, data: QuadDataset, cfg: QuadConfig) -> Trajectory:
    """Plain one-example stochastic gradient descent on the squared loss.

    No truncation and no rescaling: per step a training example is drawn
    uniformly with replacement and U steps along the exact gradient of its
    squared error.
    """
    t_start = time.perf_counter()
    rng = substream(cfg.seed, "sgd")
    u = _quad_init(gt, cfg)
    rcut = cfg.rcut if cfg.rcut is not None else default_rcut(gt.d)
    schedule = set(checkpoint_schedule(cfg.n_steps, cfg.record_every))
    cap = 1e3 * max(1.0, float(np.linalg.norm(gt.xstar)) ** 0.5)

    checkpoints = [_quad_checkpoint(0, u, gt, data, rcut)]
    traj = Trajectory(checkpoints, u, cfg, algorithm="quad-sgd")
    for t in range(cfg.n_steps):
        i = int(rng.integers(data.n))
        x = data.inputs[i]
        p = u.T @ x
        resid = float(p @ p) - data.labels[i]
        u = u - cfg.step_size * GRAD_FACTOR * resid * np.outer(x, p)
        step = t + 1
        if not np.all(np.isfinite(u)) or np.linalg.norm(u) > cap:
            traj.final_factor = u
            traj.wall_time = time.perf_counter() - t_start
            raise DivergenceError(step, traj)
        if step in schedule:
            checkpoints.append(_quad_checkpoint(step, u, gt, data, rcut))
    traj.final_factor = u
    traj.wall_time = time.perf_counter() - t_start
    traj.validate()
    return traj


# --- dataset container (shares the sensing binary layout) -------------------

def save_dataset(data: QuadDataset, path) -> None:
    blob = _pack_header(KIND_QUAD_DATASET, 0, data.d, 0, data.n, data.seed)
    blob += _floats(data.inputs) + _floats(data.labels)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_dataset(path) -> QuadDataset:
    raw = open(path, "rb").read()
    kind, _, d, _, n, seed = _read_header(raw)
    if kind != KIND_QUAD_DATASET:
        raise ValueError(f"container holds kind {kind}, not a quad dataset")
    off = _HEADER.size
    inputs, off = _take(raw, off, n * d, (n, d))
    labels, off = _take(raw, off, n, (n,))
    return QuadDataset(d=d, n=n, inputs=inputs, labels=labels, seed=seed)
