"""Phase-aligned error metrics and objective evaluations.

Magnitude-only measurements cannot distinguish x from exp(j theta) x, so
recovery error is measured after rotating the estimate by the best global
phase. The raw unaligned ratio is kept for diagnostics.
"""

from dataclasses import dataclass

import numpy as np

from .problem import ObservationKind


@dataclass
class MetricReport:
    nmse: float
    aligned_phase: float
    lad_objective: float


def align_phase(estimate, truth):
    """Rotate `estimate` by the global phase that best matches `truth`.

    theta is the angle of <estimate, truth>, which exactly minimizes
    ||exp(-j phi) * estimate - truth|| over phi. Returned theta lies in
    [0, 2 pi).
    """
    estimate = np.asarray(estimate)
    truth = np.asarray(truth)
    if np.linalg.norm(truth) == 0:
        raise ValueError("truth must be nonzero")
    theta = float(np.angle(np.vdot(truth, estimate)) % (2.0 * np.pi))
    return estimate * np.exp(-1j * theta), theta


def nmse(estimate, truth, align=True):
    """Normalized squared error ||x_hat - x||^2 / ||x||^2.

    Phase-aligned by default; pass align=False for the raw ratio, which is
    never smaller than the aligned one.
    """
    truth = np.asarray(truth)
    denom = float(np.linalg.norm(truth) ** 2)
    if denom == 0.0:
        raise ValueError("truth must be nonzero")
    est = align_phase(estimate, truth)[0] if align else np.asarray(estimate)
    return float(np.linalg.norm(est - truth) ** 2 / denom)


def lad_objective(ensemble, x, observations):
    """l1 data misfit: ||y - |Ax|^2||_1 for intensities, ||b - |Ax|||_1 for amplitudes."""
    mag = np.abs(ensemble.forward(x))
    fit = mag ** 2 if observations.kind is ObservationKind.INTENSITY else mag
    return float(np.sum(np.abs(observations.values - fit)))


def ls_objective(ensemble, x, target, kind):
    """Squared l2 misfit of |Ax|^2 or |Ax| against an arbitrary real target."""
    kind = ObservationKind(kind)
    mag = np.abs(ensemble.forward(x))
    fit = mag ** 2 if kind is ObservationKind.INTENSITY else mag
    return float(np.linalg.norm(np.asarray(target) - fit) ** 2)


def report(estimate, instance):
    """Bundle the standard metrics for one estimate of an instance's truth."""
    _, theta = align_phase(estimate, instance.truth)
    return MetricReport(
        nmse=nmse(estimate, instance.truth),
        aligned_phase=theta,
        lad_objective=lad_objective(instance.ensemble, estimate, instance.observations),
    )
