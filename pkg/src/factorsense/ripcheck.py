"""Monte-Carlo estimation of restricted-isometry constants and empirical
oracles for the concentration bounds the solvers rely on.

Certifying a restricted isometry constant is NP-hard in general, so
estimate_rip reports a lower bound obtained from random low-rank probes;
reports always carry the probe count.  Symmetrized Gaussian sensors are only
an approximate isometry on *symmetric* matrices, hence symmetric probes are
the default.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from typing import NamedTuple

import numpy as np

from .matkit import as_matrix, norms, numerical_rank, spectral_norm
from .rng import substream
from .sensing import MeasurementEnsemble

# Statistical headroom used when checking the concentration lemmas against an
# estimated delta (the estimate is itself a lower bound).
LEMMA_SLACK = 0.5


@dataclass(frozen=True)
class RipReport:
    """Estimated restricted-isometry constant for rank-`rank` matrices.

    delta_hat is a Monte-Carlo *lower bound* of the true sup-based constant:
    the maximum of |(1/m) sum_i <A_i, X>^2 - 1| over `samples` random
    Frobenius-normalized rank-`rank` probes.
    """

    rank: int
    delta_hat: float
    samples: int
    over_deviation: float
    under_deviation: float
    worst_witness: dict
    probe_mode: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def symmetric_probe(d: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    """Random symmetric rank-`rank` probe with unit Frobenius norm."""
    g = rng.standard_normal((d, rank))
    q, _ = np.linalg.qr(g)
    spectrum = rng.standard_normal(rank)
    x = (q * spectrum) @ q.T
    x = (x + x.T) / 2.0
    return x / np.linalg.norm(x)


def asymmetric_probe(d: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    """Random rank-`rank` probe G H^T with unit Frobenius norm."""
    g = rng.standard_normal((d, rank))
    h = rng.standard_normal((d, rank))
    x = g @ h.T
    return x / np.linalg.norm(x)


def isometry_deviation(ens: MeasurementEnsemble, x) -> float:
    """|(1/m) sum_i <A_i, X>^2 - ||X||_F^2| for a single probe."""
    a = as_matrix(x)
    coeffs = ens.sensors_flat @ a.ravel()
    fro2 = float(np.sum(a * a))
    return abs(float(coeffs @ coeffs) / ens.m - fro2)


def estimate_rip(ens: MeasurementEnsemble, rank: int, n_probes: int,
                 seed: int = 0, probe_mode: str = "symmetric") -> RipReport:
    """Estimate the rank-`rank` isometry constant from random probes."""
    if n_probes < 1:
        raise ValueError("need at least one probe")
    if probe_mode not in ("symmetric", "asymmetric"):
        raise ValueError(f"unknown probe mode {probe_mode!r}")
    draw = symmetric_probe if probe_mode == "symmetric" else asymmetric_probe
    rng = substream(seed, "rip-probes")
    over = 0.0
    under = 0.0
    worst = 0.0
    worst_index = 0
    for i in range(n_probes):
        x = draw(ens.d, rank, rng)
        coeffs = ens.sensors_flat @ x.ravel()
        value = float(coeffs @ coeffs) / ens.m
        over = max(over, value - 1.0)
        under = max(under, 1.0 - value)
        dev = abs(value - 1.0)
        if dev > worst:
            worst = dev
            worst_index = i
    return RipReport(rank=rank, delta_hat=worst, samples=n_probes,
                     over_deviation=over, under_deviation=under,
                     worst_witness={"seed": seed, "probe_index": worst_index},
                     probe_mode=probe_mode)


class LemmaResidual(NamedTuple):
    """Measured residual plus whether the lemma's rank precondition held."""

    value: float
    rank_ok: bool


def lemma_ip_residual(ens: MeasurementEnsemble, x, y,
                      rank: int | None = None) -> LemmaResidual:
    """Inner-product concentration residual for two low-rank matrices.

    Returns |(1/m) sum_i <A_i,X><A_i,Y> - <X,Y>|; for rank-<=r inputs this is
    bounded by delta * ||X||_F ||Y||_F.  rank_ok is False when a supplied
    rank budget is exceeded (the bound may then not apply).
    """
    a = as_matrix(x)
    b = as_matrix(y)
    rank_ok = True
    if rank is not None:
        rank_ok = numerical_rank(a) <= rank and numerical_rank(b) <= rank
    pa = ens.sensors_flat @ a.ravel()
    pb = ens.sensors_flat @ b.ravel()
    value = abs(float(pa @ pb) / ens.m - float(np.sum(a * b)))
    return LemmaResidual(value=value, rank_ok=rank_ok)


def lemma_opnorm_residual(ens: MeasurementEnsemble, x, r_mat,
                          rank: int | None = None) -> LemmaResidual:
    """Operator-norm concentration residual.

    Returns ||(1/m) sum_i <A_i,X> A_i R - X R||_2; for rank-<=r X this is
    bounded by delta * ||X||_F ||R||_2.
    """
    a = as_matrix(x)
    r = as_matrix(r_mat)
    rank_ok = True if rank is None else numerical_rank(a) <= rank
    coeffs = ens.sensors_flat @ a.ravel()
    mapped = (coeffs @ ens.sensors_flat).reshape(ens.d, ens.d) / ens.m
    value = spectral_norm(mapped @ r - a @ r)
    return LemmaResidual(value=value, rank_ok=rank_ok)


def lemma_nuclear_ip_residual(ens: MeasurementEnsemble, x, y,
                              rank: int | None = None) -> LemmaResidual:
    """Inner-product residual with an arbitrary-rank left matrix.

    Same quantity as lemma_ip_residual but compared, by the caller, against
    delta * ||X||_* ||Y||_F; only Y carries a rank budget.
    """
    a = as_matrix(x)
    b = as_matrix(y)
    rank_ok = True if rank is None else numerical_rank(b) <= rank
    pa = ens.sensors_flat @ a.ravel()
    pb = ens.sensors_flat @ b.ravel()
    value = abs(float(pa @ pb) / ens.m - float(np.sum(a * b)))
    return LemmaResidual(value=value, rank_ok=rank_ok)


def lemma_nuclear_op_residual(ens: MeasurementEnsemble, x, r_mat,
                              left=None) -> float:
    """Operator-norm residual with an arbitrary-rank matrix X.

    Returns ||(1/m) sum_i <A_i,X> [L] A_i R - [L] X R||_2 with an optional
    left factor L; compared against delta_1 * ||X||_* ||L||_2 ||R||_2 where
    delta_1 is the rank-1 isometry constant.
    """
    a = as_matrix(x)
    r = as_matrix(r_mat)
    coeffs = ens.sensors_flat @ a.ravel()
    mapped = (coeffs @ ens.sensors_flat).reshape(ens.d, ens.d) / ens.m
    if left is None:
        return spectral_norm(mapped @ r - a @ r)
    l_mat = as_matrix(left)
    return spectral_norm(l_mat @ mapped @ r - l_mat @ a @ r)


def lemma_bound(delta_hat: float, *factors: float,
                slack: float = LEMMA_SLACK) -> float:
    """Concentration bound (1 + slack) * delta_hat * prod(factors)."""
    out = (1.0 + slack) * delta_hat
    for f in factors:
        out *= f
    return out


def default_rcut(delta_target: float) -> float:
    """Default truncation radius log(1/delta_target)^2 for rank-1 sensing."""
    if not 0 < delta_target < 1:
        raise ValueError("delta_target must lie in (0, 1)")
    return math.log(1.0 / delta_target) ** 2


def truncated_rank1_deviation(xs, x, rcut: float) -> float:
    """Deviation of the truncated rank-1 measurement operator from its mean.

    With A_i = x_i x_i^T formed from the rows of xs and a symmetric X,
    returns

        || (1/m) sum_i <A_i,X> A_i 1{|<A_i,X>| <= rcut} - 2X - trace(X) I ||_2

    which concentrates below delta * ||X||_* for Gaussian inputs once
    m is large enough relative to d.
    """
    if rcut <= 0:
        raise ValueError("rcut must be positive")
    vecs = as_matrix(xs)
    a = as_matrix(x)
    d = vecs.shape[1]
    if a.shape != (d, d):
        raise ValueError(f"expected a {d}x{d} matrix, got {a.shape}")
    m = vecs.shape[0]
    # <x_i x_i^T, X> = x_i^T X x_i, vectorized over rows
    weights = np.einsum("ij,jk,ik->i", vecs, a, vecs)
    keep = np.abs(weights) <= rcut
    kept = weights * keep
    emp = (vecs * kept[:, None]).T @ vecs / m
    emp = (emp + emp.T) / 2.0
    target = 2.0 * a + np.trace(a) * np.eye(d)
    return spectral_norm(emp - target)
