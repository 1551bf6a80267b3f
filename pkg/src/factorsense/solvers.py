"""Gradient-descent solvers for the factorized sensing objective.

Three procedures share one trajectory format: deterministic gradient descent
on the factor (empirical or population mode), stochastic gradient descent
with per-step sampled batches, and a projected-gradient baseline that
descends in the matrix space and projects back onto the PSD cone.

A run is single-threaded and deterministic given (seed, config); independent
runs can execute in parallel with no shared state.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .matkit import as_matrix, psd_project
from .probes import DiagRecord, SubspaceTracker
from .rng import substream
from .sensing import (GroundTruth, MeasurementEnsemble, _adjoint, _forward,
                      gradient)


class DivergenceError(RuntimeError):
    """An iterate left the admissible region; carries the partial trajectory."""

    def __init__(self, step: int, trajectory: "Trajectory | None" = None):
        super().__init__(f"solver diverged at iteration {step}")
        self.step = step
        self.trajectory = trajectory


@dataclass(frozen=True)
class SolverConfig:
    init_scale: float                  # scale of the orthonormal initialization
    step_size: float
    n_steps: int
    seed: int = 0
    init_basis: str = "identity"       # "identity" or "haar"
    mode: str = "empirical"            # "empirical" or "population"
    batch: Optional[int] = None        # batch size for stochastic runs
    record_every: int = 100
    stop_train_error: Optional[float] = None

    def __post_init__(self):
        if not (self.init_scale > 0 and math.isfinite(self.init_scale)):
            raise ValueError("init_scale must be positive and finite")
        if not (self.step_size > 0 and math.isfinite(self.step_size)):
            raise ValueError("step_size must be positive and finite")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.init_basis not in ("identity", "haar"):
            raise ValueError(f"unknown init_basis {self.init_basis!r}")
        if self.mode not in ("empirical", "population"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.batch is not None and self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class Checkpoint:
    step: int
    train_error: float        # NaN when no ensemble defines it
    test_error: float
    population_risk: float
    diag: Optional[DiagRecord] = None


@dataclass
class Trajectory:
    checkpoints: list[Checkpoint]
    final_factor: np.ndarray  # U for factorized runs, X for the PSD baseline
    config: SolverConfig
    algorithm: str
    wall_time: float = 0.0
    stopped_at: Optional[int] = None   # early-stop iteration, if reached

    def validate(self) -> None:
        steps = [c.step for c in self.checkpoints]
        if not steps or steps[0] != 0:
            raise ValueError("trajectory must start at iteration 0")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("checkpoint iterations must strictly increase")

    @property
    def final(self) -> Checkpoint:
        return self.checkpoints[-1]


def checkpoint_schedule(n_steps: int, record_every: int) -> list[int]:
    """{0, n_steps}, multiples of record_every, and a 1-2-5 log grid.

    The log grid resolves the exponential-growth phase that a uniform stride
    would skip over.
    """
    points = {0, n_steps}
    decade = 1
    while decade <= n_steps:
        for mult in (1, 2, 5):
            value = mult * decade
            if value <= n_steps:
                points.add(value)
        decade *= 10
    points.update(range(record_every, n_steps + 1, record_every))
    return sorted(points)


def init_factor(d: int, cfg: SolverConfig) -> np.ndarray:
    """Scaled orthonormal initialization: init_scale times a basis matrix."""
    if cfg.init_basis == "identity":
        basis = np.eye(d)
    else:
        g = substream(cfg.seed, "init").standard_normal((d, d))
        q, r = np.linalg.qr(g)
        basis = q * np.sign(np.diag(r))
    return cfg.init_scale * basis


def _check_finite_update(u: np.ndarray, step: int,
                         trajectory: "Trajectory | None" = None) -> None:
    if not np.all(np.isfinite(u)):
        raise DivergenceError(step, trajectory)


def gd_step(u, ens: MeasurementEnsemble, eta: float) -> np.ndarray:
    """One empirical step U - eta * M(U U^T - X*) U.

    Bit-identical to U - eta * gradient(ens, U): both go through the same
    residual-operator code path.
    """
    a = as_matrix(u)
    out = a - eta * gradient(ens, a)
    _check_finite_update(out, 1)
    return out


def population_gd_step(u, gt: GroundTruth, eta: float) -> np.ndarray:
    """One infinite-data step (I - eta * (U U^T - X*)) U."""
    a = as_matrix(u)
    out = a - eta * ((a @ a.T - gt.xstar) @ a)
    _check_finite_update(out, 1)
    return out


def _divergence_cap(gt: GroundTruth) -> float:
    # Dynamics of interest stay O(1); a runaway norm means a too-large step.
    return 1e3 * max(1.0, float(np.linalg.norm(gt.xstar)) ** 0.5)


def _checkpoint(step, u, gt, ens, probe) -> Checkpoint:
    x_hat = u @ u.T
    diff = x_hat - gt.xstar
    fro = float(np.linalg.norm(diff))
    if ens is None:
        train = float("nan")
    else:
        resid = ens.sensors_flat @ x_hat.ravel() - ens.labels
        train = float(np.linalg.norm(resid) / np.linalg.norm(ens.labels))
    diag = probe.diagnostics(step, u) if probe is not None else None
    return Checkpoint(step=step, train_error=train,
                      test_error=fro / float(np.linalg.norm(gt.xstar)),
                      population_risk=fro * fro, diag=diag)


def run_gd(gt: GroundTruth, ens: Optional[MeasurementEnsemble],
           cfg: SolverConfig, probe: Optional[SubspaceTracker] = None) -> Trajectory:
    """Full-batch factorized gradient descent.

    mode="empirical" descends the sensing loss on `ens`; mode="population"
    descends the infinite-data risk and needs no ensemble.  Records metrics
    on the checkpoint schedule and stops early when the relative training
    error falls below cfg.stop_train_error (empirical mode only).
    """
    if cfg.mode == "empirical" and ens is None:
        raise ValueError("empirical mode needs a measurement ensemble")
    if cfg.mode == "population" and cfg.stop_train_error is not None:
        raise ValueError("population mode has no training error to stop on")
    t_start = time.perf_counter()
    u = init_factor(gt.d, cfg)
    schedule = set(checkpoint_schedule(cfg.n_steps, cfg.record_every))
    cap = _divergence_cap(gt)
    label_norm = float(np.linalg.norm(ens.labels)) if ens is not None else 0.0

    checkpoints = [_checkpoint(0, u, gt, ens, probe)]
    stopped_at = None
    traj = Trajectory(checkpoints, u, cfg, algorithm="gd")

    for t in range(cfg.n_steps):
        if cfg.mode == "empirical":
            resid = _forward(ens, u)
            if cfg.stop_train_error is not None and label_norm > 0:
                train = float(np.linalg.norm(resid)) / label_norm
                if train < cfg.stop_train_error:
                    stopped_at = t
                    break
            m_mat = _adjoint(ens, resid)
        else:
            m_mat = u @ u.T - gt.xstar
        if probe is not None:
            probe.observe(u, m_mat)
        u = u - cfg.step_size * (m_mat @ u)
        step = t + 1
        if not np.all(np.isfinite(u)) or np.linalg.norm(u) > cap:
            traj.final_factor = u
            traj.wall_time = time.perf_counter() - t_start
            raise DivergenceError(step, traj)
        if step in schedule:
            checkpoints.append(_checkpoint(step, u, gt, ens, probe))

    if stopped_at is not None and checkpoints[-1].step != stopped_at:
        # probe state (if any) already sits at this iteration
        checkpoints.append(_checkpoint(stopped_at, u, gt, ens, probe))
    traj.final_factor = u
    traj.stopped_at = stopped_at
    traj.wall_time = time.perf_counter() - t_start
    traj.validate()
    return traj


def run_sgd(gt: GroundTruth, ens: MeasurementEnsemble, cfg: SolverConfig,
            probe: Optional[SubspaceTracker] = None) -> Trajectory:
    """Stochastic factorized gradient descent.

    Each step forms the update matrix from a sampled batch of sensors:
    batch=1 picks one index uniformly with replacement; batch>1 samples a
    subset without replacement.  Everything else matches run_gd.
    """
    if cfg.batch is None:
        raise ValueError("stochastic runs need cfg.batch")
    if cfg.batch > ens.m:
        raise ValueError("batch exceeds the number of measurements")
    t_start = time.perf_counter()
    rng = substream(cfg.seed, "sgd")
    u = init_factor(gt.d, cfg)
    schedule = set(checkpoint_schedule(cfg.n_steps, cfg.record_every))
    cap = _divergence_cap(gt)
    flat = ens.sensors_flat
    label_norm = float(np.linalg.norm(ens.labels))

    checkpoints = [_checkpoint(0, u, gt, ens, probe)]
    stopped_at = None
    traj = Trajectory(checkpoints, u, cfg, algorithm="sgd")

    for t in range(cfg.n_steps):
        if cfg.batch == 1:
            idx = np.array([rng.integers(ens.m)])
        else:
            idx = rng.choice(ens.m, size=cfg.batch, replace=False)
        sub = flat[idx]
        x = u @ u.T
        resid = sub @ x.ravel() - ens.labels[idx]
        m_mat = (resid @ sub).reshape(ens.d, ens.d) / len(idx)
        m_mat = (m_mat + m_mat.T) / 2.0
        if probe is not None:
            probe.observe(u, m_mat)
        u = u - cfg.step_size * (m_mat @ u)
        step = t + 1
        if not np.all(np.isfinite(u)) or np.linalg.norm(u) > cap:
            traj.final_factor = u
            traj.wall_time = time.perf_counter() - t_start
            raise DivergenceError(step, traj)
        if step in schedule:
            cp = _checkpoint(step, u, gt, ens, probe)
            checkpoints.append(cp)
            if (cfg.stop_train_error is not None
                    and cp.train_error < cfg.stop_train_error):
                stopped_at = step
                break

    traj.final_factor = u
    traj.stopped_at = stopped_at
    traj.wall_time = time.perf_counter() - t_start
    traj.validate()
    return traj


def run_pgd(gt: GroundTruth, ens: MeasurementEnsemble,
            cfg: SolverConfig) -> Trajectory:
    """Projected gradient descent on the matrix variable.

    Starts from X_0 = 0 (a neutral PSD point), takes a step on the quadratic
    residual objective f(X) = (1/m) sum_i (<A_i,X> - y_i)^2 and projects back
    to the PSD cone.  Stops when the relative training error drops below
    cfg.stop_train_error or after n_steps iterations.
    """
    t_start = time.perf_counter()
    d = gt.d
    x = np.zeros((d, d))
    flat = ens.sensors_flat
    label_norm = float(np.linalg.norm(ens.labels))
    schedule = set(checkpoint_schedule(cfg.n_steps, cfg.record_every))
    cap = _divergence_cap(gt) ** 2

    def record(step, x_mat):
        diff = x_mat - gt.xstar
        fro = float(np.linalg.norm(diff))
        resid = flat @ x_mat.ravel() - ens.labels
        return Checkpoint(step=step,
                          train_error=float(np.linalg.norm(resid)) / label_norm,
                          test_error=fro / float(np.linalg.norm(gt.xstar)),
                          population_risk=fro * fro)

    checkpoints = [record(0, x)]
    stopped_at = None
    traj = Trajectory(checkpoints, x, cfg, algorithm="pgd")
    if (cfg.stop_train_error is not None
            and checkpoints[0].train_error < cfg.stop_train_error):
        stopped_at = 0
        traj.stopped_at = 0
        traj.wall_time = time.perf_counter() - t_start
        return traj

    for t in range(cfg.n_steps):
        resid = flat @ x.ravel() - ens.labels
        grad = 2.0 * (resid @ flat).reshape(d, d) / ens.m
        grad = (grad + grad.T) / 2.0
        x = psd_project(x - cfg.step_size * grad)
        step = t + 1
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > cap:
            traj.final_factor = x
            traj.wall_time = time.perf_counter() - t_start
            raise DivergenceError(step, traj)
        train = float(np.linalg.norm(flat @ x.ravel() - ens.labels)) / label_norm
        if cfg.stop_train_error is not None and train < cfg.stop_train_error:
            stopped_at = step
            checkpoints.append(record(step, x))
            break
        if step in schedule:
            checkpoints.append(record(step, x))

    if checkpoints[-1].step != (stopped_at if stopped_at is not None else cfg.n_steps):
        checkpoints.append(record(stopped_at if stopped_at is not None else cfg.n_steps, x))
    traj.final_factor = x
    traj.stopped_at = stopped_at
    traj.wall_time = time.perf_counter() - t_start
    traj.validate()
    return traj


# --- small-initialization presets -----------------------------------------
#
# Two conservative scales under which the low-rank implicit bias of small
# initialization provably takes hold; the absolute constants are heuristic
# and the two regimes are exposed side by side rather than adjudicated.

def init_scale_rank1_regime(delta: float, d: int) -> float:
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return delta * math.sqrt(math.log(1.0 / delta) / d)


def init_scale_general_regime(delta: float, r: int, kappa: float, d: int,
                              c: float = 1.0) -> float:
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return c * min(delta * math.sqrt(r) * kappa, 1.0 / d)


# --- trajectory CSV ---------------------------------------------------------

CSV_HEADER = ("t,train_error,test_error,population_risk,"
              "sigma_rp1,sin_zu,norm_E,sigmin_R,norm_Z,norm_F")

_DIAG_FIELDS = ("sigma_rp1", "sin_zu", "norm_E", "sigmin_R", "norm_Z", "norm_F")


def _fmt(value) -> str:
    if value is None:
        return ""
    v = float(value)
    if math.isnan(v):
        return ""
    return repr(v)


def trajectory_csv_text(traj: Trajectory) -> str:
    """Render a trajectory as CSV; byte-identical for identical runs."""
    lines = [CSV_HEADER]
    for cp in traj.checkpoints:
        cells = [str(cp.step), _fmt(cp.train_error), _fmt(cp.test_error),
                 _fmt(cp.population_risk)]
        if cp.diag is None:
            cells.extend([""] * len(_DIAG_FIELDS))
        else:
            cells.extend(_fmt(getattr(cp.diag, name)) for name in _DIAG_FIELDS)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(trajectory_csv_text(traj))


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    """Parse a trajectory CSV back into column arrays (missing -> NaN)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    if ",".join(header) != CSV_HEADER:
        raise ValueError(f"unexpected trajectory header: {lines[0]!r}")
    columns = {name: [] for name in header}
    for ln in lines[1:]:
        cells = ln.split(",")
        for name, cell in zip(header, cells):
            columns[name].append(float(cell) if cell else float("nan"))
    return {name: np.array(vals) for name, vals in columns.items()}
