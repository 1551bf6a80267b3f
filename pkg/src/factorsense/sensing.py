"""Matrix-sensing problem setup: ground truths, measurement ensembles,
the averaged measurement operator, losses, gradients and error metrics.

The model: a planted PSD matrix X* of rank r is observed through m symmetric
sensing matrices A_i via labels y_i = <A_i, X*>.  Solvers optimize over a
factor U with X = U U^T.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .matkit import as_matrix
from .rng import substream

# Dense ensembles only; larger configurations must be rejected, not streamed.
MAX_ENSEMBLE_BYTES = 6 * 2**30


class ZeroLabelError(ValueError):
    """Raised when a relative training error is requested but all labels are 0."""


@dataclass(frozen=True)
class GroundTruth:
    """Planted target X* = ustar @ diag(sigma) @ ustar.T.

    ustar has orthonormal columns (the eigenbasis of X*), sigma holds the
    nonzero eigenvalues in descending order, and kappa = sigma[0] / sigma[-1]
    is the condition number (equal to 1/sigma_min when the spectral norm
    is 1, as in "spec" mode).
    """

    d: int
    r: int
    ustar: np.ndarray
    sigma: np.ndarray
    xstar: np.ndarray
    kappa: float
    mode: str
    seed: int

    def __post_init__(self):
        for arr in (self.ustar, self.sigma, self.xstar):
            arr.setflags(write=False)

    @property
    def uvec(self) -> np.ndarray:
        """Unit vector spanning col(X*); only defined for rank 1."""
        if self.r != 1:
            raise ValueError("uvec is only defined for rank-1 ground truths")
        return self.ustar[:, 0]


def sample_ground_truth(d: int, r: int, kappa: float | None = None,
                        mode: str = "spec", seed: int = 0) -> GroundTruth:
    """Draw a planted rank-r PSD target.

    mode="spec": Haar-random orthonormal eigenbasis with eigenvalues linearly
    spaced from 1 down to 1/kappa, so the spectral norm is exactly 1.

    mode="experiment": each entry of a d x r factor is standard Gaussian, its
    columns are normalized to unit norm, and X* is the factor times its
    transpose; kappa is emergent and reported, not controlled.
    """
    if not (1 <= r <= d):
        raise ValueError(f"need 1 <= r <= d, got r={r}, d={d}")
    rng = substream(seed, "ground-truth")
    if mode == "spec":
        if kappa is None:
            kappa = 1.0
        if kappa < 1.0:
            raise ValueError("kappa must be >= 1")
        g = rng.standard_normal((d, r))
        q, rr = np.linalg.qr(g)
        q = q * np.sign(np.diag(rr))
        sigma = np.linspace(1.0, 1.0 / kappa, r)
        x = (q * sigma) @ q.T
        x = (x + x.T) / 2.0
        return GroundTruth(d=d, r=r, ustar=q, sigma=sigma, xstar=x,
                           kappa=float(kappa), mode=mode, seed=seed)
    if mode == "experiment":
        if kappa is not None:
            raise ValueError("experiment mode does not control kappa")
        g = rng.standard_normal((d, r))
        g /= np.linalg.norm(g, axis=0)
        x = g @ g.T
        x = (x + x.T) / 2.0
        w, v = np.linalg.eigh(x)
        order = np.argsort(w)[::-1][:r]
        sigma = w[order].copy()
        ustar = v[:, order].copy()
        return GroundTruth(d=d, r=r, ustar=ustar, sigma=sigma, xstar=x,
                           kappa=float(sigma[0] / sigma[-1]), mode=mode,
                           seed=seed)
    raise ValueError(f"unknown ground-truth mode {mode!r}")


@dataclass(frozen=True)
class MeasurementEnsemble:
    """m exactly-symmetric sensing matrices plus their label vector."""

    d: int
    m: int
    sensors: np.ndarray   # (m, d, d)
    labels: np.ndarray    # (m,)
    seed: int
    rank: int = 0         # rank of the generating ground truth, 0 if unknown

    def __post_init__(self):
        self.sensors.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def sensors_flat(self) -> np.ndarray:
        return self.sensors.reshape(self.m, self.d * self.d)


def sample_gaussian_ensemble(gt: GroundTruth, m: int, seed: int = 0,
                             noise_sigma: float = 0.0) -> MeasurementEnsemble:
    """Sample A_i = (Q_i + Q_i^T)/2 with Q_i i.i.d. standard Gaussian.

    Labels are <A_i, X*>; symmetrizing the sensors does not change them
    because X* is symmetric.  noise_sigma adds optional Gaussian label noise
    from an independent substream (sigma=0 reproduces noiseless labels
    bit-exactly).
    """
    if m < 1:
        raise ValueError("need at least one measurement")
    nbytes = m * gt.d * gt.d * 8
    if nbytes > MAX_ENSEMBLE_BYTES:
        raise ValueError(
            f"ensemble of m={m}, d={gt.d} needs {nbytes / 2**30:.1f} GiB "
            f"dense storage, above the {MAX_ENSEMBLE_BYTES / 2**30:.0f} GiB cap")
    rng = substream(seed, "ensemble")
    q = rng.standard_normal((m, gt.d, gt.d))
    sensors = (q + q.transpose(0, 2, 1)) / 2.0
    labels = sensors.reshape(m, -1) @ gt.xstar.ravel()
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if noise_sigma > 0:
        labels = labels + noise_sigma * substream(seed, "label-noise").standard_normal(m)
    return MeasurementEnsemble(d=gt.d, m=m, sensors=sensors, labels=labels,
                               seed=seed, rank=gt.r)


def _check_square(ens: MeasurementEnsemble, q) -> np.ndarray:
    a = as_matrix(q)
    if a.shape != (ens.d, ens.d):
        raise ValueError(f"expected a {ens.d}x{ens.d} matrix, got {a.shape}")
    return a


def apply_map(ens: MeasurementEnsemble, q) -> np.ndarray:
    """Averaged measurement operator (1/m) sum_i <A_i, Q> A_i."""
    a = _check_square(ens, q)
    coeffs = ens.sensors_flat @ a.ravel()
    out = (coeffs @ ens.sensors_flat).reshape(ens.d, ens.d) / ens.m
    return (out + out.T) / 2.0


def _forward(ens: MeasurementEnsemble, u: np.ndarray) -> np.ndarray:
    """Residual vector (<A_i, U U^T> - y_i)_i."""
    x = u @ u.T
    return ens.sensors_flat @ x.ravel() - ens.labels


def _adjoint(ens: MeasurementEnsemble, coeffs: np.ndarray) -> np.ndarray:
    out = (coeffs @ ens.sensors_flat).reshape(ens.d, ens.d) / ens.m
    return (out + out.T) / 2.0


def residual_operator(ens: MeasurementEnsemble, u) -> np.ndarray:
    """The averaged residual matrix (1/m) sum_i (<A_i, U U^T> - y_i) A_i.

    Equals apply_map(ens, U U^T) minus (1/m) sum_i y_i A_i; drives the
    factorized gradient-descent update.
    """
    a = as_matrix(u)
    if a.shape[0] != ens.d:
        raise ValueError(f"factor must have {ens.d} rows, got {a.shape[0]}")
    return _adjoint(ens, _forward(ens, a))


def loss(ens: MeasurementEnsemble, u) -> float:
    """Quadratic sensing loss (1/(4m)) sum_i (y_i - <A_i, U U^T>)^2.

    Normalized so that the analytic gradient is exactly
    residual_operator(ens, U) @ U.
    """
    a = as_matrix(u)
    resid = _forward(ens, a)
    return float(resid @ resid) / (4.0 * ens.m)


def gradient(ens: MeasurementEnsemble, u) -> np.ndarray:
    """Gradient of loss(); identical to the residual operator applied to U."""
    a = as_matrix(u)
    return residual_operator(ens, a) @ a


class Metrics(NamedTuple):
    train_error: float
    test_error: float
    population_risk: float


def metrics(ens: MeasurementEnsemble, gt: GroundTruth, x_hat) -> Metrics:
    """Relative training error, relative test error and population risk.

    train = sqrt(sum(<A_i, X> - y_i)^2 / sum y_i^2)
    test  = ||X - X*||_F / ||X*||_F
    population_risk = ||X - X*||_F^2
    """
    a = _check_square(ens, x_hat)
    resid = ens.sensors_flat @ a.ravel() - ens.labels
    label_norm = float(np.linalg.norm(ens.labels))
    if label_norm == 0.0:
        raise ZeroLabelError("relative training error undefined: all labels are zero")
    train = float(np.linalg.norm(resid)) / label_norm
    diff = a - gt.xstar
    fro = float(np.linalg.norm(diff))
    return Metrics(train_error=train,
                   test_error=fro / float(np.linalg.norm(gt.xstar)),
                   population_risk=fro * fro)


# ---------------------------------------------------------------------------
# Binary container (shared by ground truths, ensembles and quad datasets)
#
# header (32 bytes, little endian):
#   magic   4s   b"MSEN"
#   version u16  1
#   kind    u16  1 = ground truth, 2 = ensemble, 3 = quad dataset
#   flags   u32  bit 0: ground-truth mode is "experiment"
#   d       u32
#   r       u32
#   m       u32  (measurement / sample count; 0 for ground truths)
#   seed    i64
# payload: row-major little-endian float64 arrays, in the order listed below
#   kind 1: ustar (d*r), sigma (r), xstar (d*d), kappa (1)
#   kind 2: sensors (m*d*d), labels (m)
#   kind 3: inputs (m*d), labels (m)
# ---------------------------------------------------------------------------

_MAGIC = b"MSEN"
_VERSION = 1
_HEADER = struct.Struct("<4sHHIIIIq")

KIND_GROUND_TRUTH = 1
KIND_ENSEMBLE = 2
KIND_QUAD_DATASET = 3


def _pack_header(kind, flags, d, r, m, seed) -> bytes:
    return _HEADER.pack(_MAGIC, _VERSION, kind, flags, d, r, m, seed)


def _read_header(raw: bytes):
    if len(raw) < _HEADER.size:
        raise ValueError("container truncated: missing header")
    magic, version, kind, flags, d, r, m, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError("not a factorsense container (bad magic)")
    if version != _VERSION:
        raise ValueError(f"unsupported container version {version}")
    return kind, flags, d, r, m, seed


def _floats(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _take(raw: bytes, offset: int, count: int, shape) -> tuple[np.ndarray, int]:
    nbytes = count * 8
    if offset + nbytes > len(raw):
        raise ValueError("container truncated: payload too short")
    arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    return arr.astype(np.float64).reshape(shape), offset + nbytes


def save_ground_truth(gt: GroundTruth, path) -> None:
    flags = 1 if gt.mode == "experiment" else 0
    blob = _pack_header(KIND_GROUND_TRUTH, flags, gt.d, gt.r, 0, gt.seed)
    blob += _floats(gt.ustar) + _floats(gt.sigma) + _floats(gt.xstar)
    blob += _floats(np.array([gt.kappa]))
    with open(path, "wb") as fh:
        fh.write(blob)


def load_ground_truth(path) -> GroundTruth:
    raw = open(path, "rb").read()
    kind, flags, d, r, _, seed = _read_header(raw)
    if kind != KIND_GROUND_TRUTH:
        raise ValueError(f"container holds kind {kind}, not a ground truth")
    off = _HEADER.size
    ustar, off = _take(raw, off, d * r, (d, r))
    sigma, off = _take(raw, off, r, (r,))
    xstar, off = _take(raw, off, d * d, (d, d))
    kappa, off = _take(raw, off, 1, (1,))
    mode = "experiment" if flags & 1 else "spec"
    return GroundTruth(d=d, r=r, ustar=ustar, sigma=sigma, xstar=xstar,
                       kappa=float(kappa[0]), mode=mode, seed=seed)


def save_ensemble(ens: MeasurementEnsemble, path) -> None:
    blob = _pack_header(KIND_ENSEMBLE, 0, ens.d, ens.rank, ens.m, ens.seed)
    blob += _floats(ens.sensors) + _floats(ens.labels)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_ensemble(path) -> MeasurementEnsemble:
    raw = open(path, "rb").read()
    kind, _, d, r, m, seed = _read_header(raw)
    if kind != KIND_ENSEMBLE:
        raise ValueError(f"container holds kind {kind}, not an ensemble")
    if m * d * d * 8 > MAX_ENSEMBLE_BYTES:
        raise ValueError("ensemble exceeds the dense storage cap")
    off = _HEADER.size
    sensors, off = _take(raw, off, m * d * d, (m, d, d))
    labels, off = _take(raw, off, m, (m,))
    return MeasurementEnsemble(d=d, m=m, sensors=sensors, labels=labels,
                               seed=seed, rank=r)
