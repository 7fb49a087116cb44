"""Problem generation: signals, measurement ensembles, observations, noise.

A signal is a 1-D complex numpy array. Measurements are magnitude-only,
either intensities |Ax|^2 or amplitudes |Ax|, optionally corrupted by
additive two-term Gaussian-mixture noise calibrated to a target SNR.
Noisy observations may go negative and are never clipped; the solvers
handle negative targets directly.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .numerics import (
    LeastSquaresFactorization,
    adjoint_matvec,
    lstsq_solve,
    matvec,
    sample_complex_gaussian,
)

# Signals and estimates are plain complex vectors.
Signal = np.ndarray


class ObservationKind(str, Enum):
    INTENSITY = "intensity"
    AMPLITUDE = "amplitude"


class MeasurementEnsemble:
    """M x N sensing matrix with its reusable least-squares factorization.

    The matrix is fixed for the lifetime of a problem instance, so the
    factorization is built once here and shared by every solver iteration.
    """

    def __init__(self, matrix):
        matrix = np.asarray(matrix)
        if matrix.ndim != 2:
            raise ValueError("measurement matrix must be 2-D")
        self.matrix = matrix
        self.m, self.n = matrix.shape
        self.lstsq = LeastSquaresFactorization(matrix)

    def forward(self, x):
        return matvec(self.matrix, x)

    def adjoint(self, u):
        return adjoint_matvec(self.matrix, u)

    def solve_lstsq(self, rhs):
        return lstsq_solve(self.lstsq, rhs)


@dataclass
class Observations:
    """Real measurement vector tagged with its model kind."""

    values: np.ndarray
    kind: ObservationKind

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("observations must be a 1-D vector")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("observations must be finite")
        self.kind = ObservationKind(self.kind)


@dataclass
class GmmNoiseModel:
    """Two-term Gaussian mixture: N(0, sigma1_sq) w.p. c1, N(0, sigma2_sq) w.p. c2."""

    c1: float
    c2: float
    sigma1_sq: float
    sigma2_sq: float

    def __post_init__(self):
        if not (0.0 <= self.c1 <= 1.0 and 0.0 <= self.c2 <= 1.0):
            raise ValueError("mixture weights must lie in [0, 1]")
        if abs(self.c1 + self.c2 - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        if self.sigma1_sq <= 0 or self.sigma2_sq <= 0:
            raise ValueError("component variances must be positive")

    @property
    def total_variance(self):
        return self.c1 * self.sigma1_sq + self.c2 * self.sigma2_sq


@dataclass
class ProblemInstance:
    """One trial's data: truth, ensemble, observations, noise model, seed.

    `truth` may be None when the instance wraps real measured data; solver
    traces then omit the NMSE entries.
    """

    truth: Signal | None
    ensemble: MeasurementEnsemble
    observations: Observations
    noise: GmmNoiseModel | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.truth is not None and self.truth.shape != (self.ensemble.n,):
            raise ValueError("truth length does not match the ensemble")
        if self.observations.values.shape != (self.ensemble.m,):
            raise ValueError("observation length does not match the ensemble")


def generate_instance(n, m, rng):
    """Draw a ground-truth signal and a Gaussian measurement ensemble.

    Signal entries and matrix entries are i.i.d. standard complex Gaussian.
    Consumes the signal first, then the matrix, so replaying the generator
    reproduces the instance exactly. Requires m >= n so the least-squares
    steps see a full-column-rank system (almost surely).
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if m < n:
        raise ValueError(f"need m >= n, got m={m}, n={n}")
    signal = sample_complex_gaussian(rng, n)
    matrix = sample_complex_gaussian(rng, m * n).reshape(m, n)
    return signal, MeasurementEnsemble(matrix)


def observe(ensemble, signal, kind):
    """Noiseless observations of a signal: |Ax|^2 or |Ax| per `kind`."""
    kind = ObservationKind(kind)
    mag = np.abs(ensemble.forward(signal))
    values = mag ** 2 if kind is ObservationKind.INTENSITY else mag
    return Observations(values=values, kind=kind)


def calibrate_gmm(signal, snr_db, c2=0.1, variance_ratio=100.0):
    """Choose mixture variances so the total noise variance hits a target SNR.

    SNR is taken literally as ||x||^2 / sigma_v^2 with sigma_v^2 the
    per-sample noise variance, so sigma_v^2 = ||x||^2 / 10^(snr_db/10) and
    sigma1_sq solves sigma_v^2 = c1 sigma1_sq + c2 (ratio * sigma1_sq).
    """
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    if not 0.0 < c2 < 1.0:
        raise ValueError("c2 must lie strictly between 0 and 1")
    if variance_ratio <= 1.0:
        raise ValueError("variance_ratio must exceed 1")
    energy = float(np.linalg.norm(signal) ** 2)
    if energy == 0.0:
        raise ValueError("cannot calibrate noise against a zero signal")
    total = energy / 10.0 ** (snr_db / 10.0)
    c1 = 1.0 - c2
    sigma1_sq = total / (c1 + c2 * variance_ratio)
    return GmmNoiseModel(c1=c1, c2=c2, sigma1_sq=sigma1_sq,
                         sigma2_sq=variance_ratio * sigma1_sq)


def sample_gmm_noise(model, m, rng):
    """Draw m independent mixture samples.

    RNG consumption order is part of the contract: one uniform vector for
    the component choice (entry i is an outlier when it falls below c2),
    then one standard normal vector scaled per component. Callers can
    replay the generator to recover the component labels.
    """
    if m < 1:
        raise ValueError("need m >= 1")
    outlier = rng.random(m) < model.c2
    scale = np.where(outlier, np.sqrt(model.sigma2_sq), np.sqrt(model.sigma1_sq))
    return rng.standard_normal(m) * scale
