"""Robust phase retrieval: l1-criterion ADMM solvers for intensity and
amplitude measurements, gradient and alternating-projection baselines, and
a reproducible Monte Carlo benchmark harness."""

from .harness import (
    AggregateRecord,
    ExperimentConfig,
    TrialRecord,
    derive_seed,
    parse_config,
    run_experiment,
    run_single,
    run_trial,
)
from .metrics import MetricReport, align_phase, lad_objective, ls_objective, nmse
from .problem import (
    GmmNoiseModel,
    MeasurementEnsemble,
    Observations,
    ObservationKind,
    ProblemInstance,
    calibrate_gmm,
    generate_instance,
    observe,
    sample_gmm_noise,
)
from .solvers import (
    AdmmState,
    IterateTrace,
    SolverOptions,
    SolverResult,
    Termination,
    admm_amplitude,
    admm_intensity,
    gs_solve,
    prox_l1,
    soft_threshold,
    spectral_init,
    wf_solve,
)

__version__ = "0.1.0"

__all__ = [
    "AdmmState", "AggregateRecord", "ExperimentConfig", "GmmNoiseModel",
    "IterateTrace", "MeasurementEnsemble", "MetricReport", "Observations",
    "ObservationKind", "ProblemInstance", "SolverOptions", "SolverResult",
    "Termination", "TrialRecord", "align_phase", "admm_amplitude",
    "admm_intensity", "calibrate_gmm", "derive_seed", "generate_instance",
    "gs_solve", "lad_objective", "ls_objective", "nmse", "observe",
    "parse_config", "prox_l1", "run_experiment", "run_single", "run_trial",
    "sample_gmm_noise", "soft_threshold", "spectral_init", "wf_solve",
]
