"""Config-driven Monte Carlo benchmark runner.

Seeds are derived per (master_seed, snr, trial) and deliberately not per
algorithm: every algorithm at one grid point sees the identical signal,
measurement matrix, noise realization, and spectral starting point, so the
comparisons are paired. Trials are independent tasks; results are sorted
into a canonical order before aggregation so worker count and scheduling
never change the output.

Two experiment families map onto one config format: a multi-point SNR grid
produces NMSE-vs-SNR aggregates, a single-SNR grid additionally produces
per-iteration aggregates of the NMSE traces (early-stopped traces carry
their last value forward). One axis unit is one gradient step, one
alternating round, or one ADMM outer iteration, matching how the curves
are usually drawn.
"""

import csv
import hashlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import solvers
from .metrics import nmse
from .problem import (
    ObservationKind,
    Observations,
    ProblemInstance,
    calibrate_gmm,
    generate_instance,
    observe,
    sample_gmm_noise,
)
from .solvers import SolverOptions, Termination

# Which algorithms make sense on which observation model.
ALGORITHM_MODELS = {
    "wf": (ObservationKind.INTENSITY,),
    "gs": (ObservationKind.AMPLITUDE,),
    "lad-admm": (ObservationKind.INTENSITY, ObservationKind.AMPLITUDE),
}


class ConfigError(Exception):
    """Config file problem; the message carries file and line context."""


class TrialError(RuntimeError):
    """A solver blew up inside one trial; names the failing coordinates."""


@dataclass
class ExperimentConfig:
    model: ObservationKind
    algorithms: tuple
    n: int = 32
    m_over_n: int = 8
    trials: int = 100
    master_seed: int = 1
    snr_grid_db: tuple | None = None  # None means noise-free
    noise_c2: float | None = 0.1      # None disables noise
    noise_variance_ratio: float = 100.0
    options: SolverOptions = field(default_factory=SolverOptions)

    @property
    def m(self):
        return self.n * self.m_over_n

    @property
    def noisy(self):
        return self.noise_c2 is not None

    def __post_init__(self):
        self.model = ObservationKind(self.model)
        self.algorithms = tuple(self.algorithms)
        if not self.algorithms:
            raise ValueError("need at least one algorithm")
        for alg in self.algorithms:
            if alg not in ALGORITHM_MODELS:
                raise ValueError(f"unknown algorithm '{alg}'")
            if self.model not in ALGORITHM_MODELS[alg]:
                raise ValueError(f"algorithm '{alg}' does not apply to the "
                                 f"{self.model.value} model")
        if self.n < 1 or self.m_over_n < 1:
            raise ValueError("n and m_over_n must be positive")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if self.noisy:
            if not self.snr_grid_db:
                raise ValueError("noisy experiments need a non-empty snr_grid_db")
            self.snr_grid_db = tuple(float(s) for s in self.snr_grid_db)
        elif self.snr_grid_db is not None:
            raise ValueError("snr_grid_db is meaningless without noise")


@dataclass
class TrialRecord:
    algorithm: str
    model: ObservationKind
    snr_db: float | None
    trial: int
    final_nmse: float
    iterations: int
    wall_ms: float
    instance_digest: str
    termination: str
    nmse_trace: list = field(default_factory=list)


@dataclass
class AggregateRecord:
    algorithm: str
    model: ObservationKind
    x_kind: str              # "snr_db" or "iteration"
    x_value: float | int | None
    stat: str                # "median" or "mean"
    nmse: float
    trials: int


def derive_seed(master_seed, snr_db, trial_index):
    """Hash the trial coordinates into a 64-bit generator seed.

    The algorithm is deliberately absent from the hash: all algorithms at a
    given (master seed, SNR, trial) must replay the identical instance.
    SNR None (noise-free) gets a fixed tag so it cannot collide with a
    numeric grid point.
    """
    tag = "nf" if snr_db is None else format(float(snr_db), ".6g")
    text = f"{int(master_seed)}|{tag}|{int(trial_index)}"
    digest = hashlib.sha256(text.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little")


def _digest_arrays(*arrays):
    """Short stable digest of array contents, shape and dtype tagged."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode("ascii"))
        h.update(str(a.shape).encode("ascii"))
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def run_single(model, algorithm, n, m, snr_db, trial_index, master_seed,
               options, noise_c2=0.1, noise_variance_ratio=100.0):
    """One seeded trial; returns (record, estimate, instance).

    snr_db None runs noise-free. The instance is rebuilt from the derived
    seed on every call, which is what makes paired comparisons across
    algorithms possible without shipping arrays around.
    """
    model = ObservationKind(model)
    if algorithm not in ALGORITHM_MODELS:
        raise ValueError(f"unknown algorithm '{algorithm}'")
    if model not in ALGORITHM_MODELS[algorithm]:
        raise ValueError(f"algorithm '{algorithm}' does not apply to the "
                         f"{model.value} model")
    seed = derive_seed(master_seed, snr_db, trial_index)
    rng = np.random.default_rng(seed)
    truth, ensemble = generate_instance(n, m, rng)
    clean = observe(ensemble, truth, model)
    if snr_db is None:
        noise_model = None
        values = clean.values
    else:
        noise_model = calibrate_gmm(truth, snr_db, noise_c2, noise_variance_ratio)
        values = clean.values + sample_gmm_noise(noise_model, m, rng)
    obs = Observations(values=values, kind=model)
    x0 = solvers.spectral_init(ensemble, obs)
    digest = _digest_arrays(truth, ensemble.matrix, values, x0)
    instance = ProblemInstance(truth=truth, ensemble=ensemble,
                               observations=obs, noise=noise_model, seed=seed)

    start = time.perf_counter()
    if algorithm == "lad-admm":
        admm = (solvers.admm_intensity if model is ObservationKind.INTENSITY
                else solvers.admm_amplitude)
        result = admm(instance, options, x0)
        estimate = result.estimate
        trace = list(result.trace.nmse)
        iterations = result.iterations
        termination = result.termination
    else:
        trace = [nmse(x0, truth)]

        def track(_k, x):
            trace.append(nmse(x, truth))

        if algorithm == "wf":
            estimate = solvers.wf_solve(ensemble, obs.values, x0,
                                        options.max_outer_iters,
                                        step_params=options.wf_step_params,
                                        on_iterate=track)
        else:
            estimate = solvers.gs_solve(ensemble, obs.values, x0,
                                        options.max_outer_iters,
                                        on_iterate=track)
        iterations = options.max_outer_iters
        termination = Termination.MAX_ITERS
    wall_ms = (time.perf_counter() - start) * 1e3

    record = TrialRecord(algorithm=algorithm, model=model, snr_db=snr_db,
                         trial=trial_index, final_nmse=nmse(estimate, truth),
                         iterations=iterations, wall_ms=wall_ms,
                         instance_digest=digest,
                         termination=termination.value, nmse_trace=trace)
    return record, estimate, instance


def run_trial(config, algorithm, snr_db, trial_index):
    """TrialRecord for one (algorithm, snr, trial) cell of an experiment."""
    record, _, _ = run_single(config.model, algorithm, config.n, config.m,
                              snr_db, trial_index, config.master_seed,
                              config.options,
                              noise_c2=config.noise_c2 if config.noisy else 0.1,
                              noise_variance_ratio=config.noise_variance_ratio)
    return record


def _snr_grid(config):
    return list(config.snr_grid_db) if config.noisy else [None]


def run_experiment(config, workers=1):
    """All trials of an experiment; returns (aggregates, trial records).

    Tasks may run in any order across processes; records are re-sorted into
    (algorithm, grid position, trial) order before aggregation, so results
    are a pure function of the config (timing fields aside).
    """
    if workers < 1:
        raise ValueError("workers must be positive")
    grid = _snr_grid(config)
    tasks = [(alg, snr_db, trial)
             for alg in config.algorithms
             for snr_db in grid
             for trial in range(config.trials)]

    records = []
    if workers == 1:
        for alg, snr_db, trial in tasks:
            records.append(_checked_trial(config, alg, snr_db, trial))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(task, pool.submit(run_trial, config, *task))
                       for task in tasks]
            for (alg, snr_db, trial), fut in futures:
                try:
                    records.append(fut.result())
                except Exception as exc:
                    raise TrialError(
                        f"trial failed: algorithm={alg} snr_db={snr_db} "
                        f"trial={trial}: {exc}") from exc

    order = {alg: i for i, alg in enumerate(config.algorithms)}
    grid_pos = {snr: i for i, snr in enumerate(grid)}
    records.sort(key=lambda r: (order[r.algorithm], grid_pos[r.snr_db], r.trial))
    return aggregate(config, records), records


def _checked_trial(config, algorithm, snr_db, trial):
    try:
        return run_trial(config, algorithm, snr_db, trial)
    except Exception as exc:
        raise TrialError(f"trial failed: algorithm={algorithm} "
                         f"snr_db={snr_db} trial={trial}: {exc}") from exc


def aggregate(config, records):
    """Median and mean NMSE per grid point, plus per-iteration curves when
    the grid has a single point."""
    grid = _snr_grid(config)
    out = []
    for alg in config.algorithms:
        for snr_db in grid:
            finals = np.array([r.final_nmse for r in records
                               if r.algorithm == alg and r.snr_db == snr_db])
            for stat, value in (("median", np.median(finals)),
                                ("mean", finals.mean())):
                out.append(AggregateRecord(algorithm=alg, model=config.model,
                                           x_kind="snr_db", x_value=snr_db,
                                           stat=stat, nmse=float(value),
                                           trials=len(finals)))
    if config.noisy and len(grid) == 1:
        length = config.options.max_outer_iters + 1  # includes iterate 0
        for alg in config.algorithms:
            traces = [r.nmse_trace for r in records if r.algorithm == alg]
            padded = np.array([t + [t[-1]] * (length - len(t)) for t in traces])
            med = np.median(padded, axis=0)
            avg = padded.mean(axis=0)
            for i in range(length):
                for stat, curve in (("median", med), ("mean", avg)):
                    out.append(AggregateRecord(algorithm=alg, model=config.model,
                                               x_kind="iteration", x_value=i,
                                               stat=stat, nmse=float(curve[i]),
                                               trials=len(traces)))
    return out


def _fmt(value):
    return format(float(value), ".9g")


def write_trials_csv(path, records):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["algorithm", "model", "snr_db", "trial", "final_nmse",
                    "iterations", "wall_ms", "instance_digest"])
        for r in records:
            w.writerow([r.algorithm, r.model.value,
                        "" if r.snr_db is None else _fmt(r.snr_db),
                        r.trial, _fmt(r.final_nmse), r.iterations,
                        _fmt(r.wall_ms), r.instance_digest])


def write_aggregates_csv(path, aggregates):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["algorithm", "model", "x_kind", "x_value", "stat",
                    "nmse", "trials"])
        for a in aggregates:
            if a.x_value is None:
                x = ""
            elif a.x_kind == "iteration":
                x = str(int(a.x_value))
            else:
                x = _fmt(a.x_value)
            w.writerow([a.algorithm, a.model.value, a.x_kind, x, a.stat,
                        _fmt(a.nmse), a.trials])


# ---------------------------------------------------------------------------
# Config file format: flat "key = value" lines, '#' starts a comment.

_CONFIG_KEYS = (
    "model", "algorithms", "n", "m_over_n", "trials", "master_seed",
    "snr_grid_db", "noise", "noise_c2", "noise_variance_ratio",
    "rho", "max_outer_iters", "outer_tol", "inner_iters",
    "wf_tau0", "wf_mu_max",
)


def parse_config(path):
    """Read and validate an experiment config; errors carry file:line."""
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc

    raw = {}
    for num, line in enumerate(lines, 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{num}: expected 'key = value'")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{num}: unknown key '{key}'")
        if key in raw:
            raise ConfigError(f"{path}:{num}: duplicate key '{key}'")
        if not value:
            raise ConfigError(f"{path}:{num}: empty value for '{key}'")
        raw[key] = (value, num)
    return _build_config(raw, path)


def _take(raw, path, key, cast, default=None):
    if key not in raw:
        return default
    value, num = raw.pop(key)
    try:
        return cast(value)
    except ValueError as exc:
        raise ConfigError(f"{path}:{num}: bad value for '{key}': {exc}") from exc


def _float_list(text):
    parts = [p.strip() for p in text.split(",")]
    if not all(parts):
        raise ValueError("empty list entry")
    return tuple(float(p) for p in parts)


def _str_list(text):
    parts = [p.strip() for p in text.split(",")]
    if not all(parts):
        raise ValueError("empty list entry")
    return tuple(parts)


def _model_value(text):
    try:
        return ObservationKind(text)
    except ValueError:
        raise ValueError("expected 'intensity' or 'amplitude'") from None


def _noise_value(text):
    if text not in ("gmm", "none"):
        raise ValueError("expected 'gmm' or 'none'")
    return text


def _build_config(raw, path):
    for key in ("model", "algorithms"):
        if key not in raw:
            raise ConfigError(f"{path}: missing required key '{key}'")

    model = _take(raw, path, "model", _model_value)
    algorithms = _take(raw, path, "algorithms", _str_list)
    n = _take(raw, path, "n", int, 32)
    m_over_n = _take(raw, path, "m_over_n", int, 8)
    trials = _take(raw, path, "trials", int, 100)
    master_seed = _take(raw, path, "master_seed", int, 1)
    snr_grid = _take(raw, path, "snr_grid_db", _float_list)
    noise = _take(raw, path, "noise", _noise_value,
                  "gmm" if snr_grid is not None else "none")
    noise_c2 = _take(raw, path, "noise_c2", float, 0.1)
    noise_ratio = _take(raw, path, "noise_variance_ratio", float, 100.0)

    try:
        options = SolverOptions(
            rho=_take(raw, path, "rho", float, 1.0),
            max_outer_iters=_take(raw, path, "max_outer_iters", int, 200),
            outer_tol=_take(raw, path, "outer_tol", float, 1e-6),
            inner_iters=_take(raw, path, "inner_iters", int),
            wf_step_params=(_take(raw, path, "wf_tau0", float, 330.0),
                            _take(raw, path, "wf_mu_max", float, 0.2)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    assert not raw  # every known key was consumed above

    if noise == "none":
        if snr_grid is not None:
            raise ConfigError(f"{path}: snr_grid_db requires 'noise = gmm'")
        noise_c2 = None
    else:
        if snr_grid is None:
            raise ConfigError(f"{path}: 'noise = gmm' requires snr_grid_db")
        if not 0.0 < noise_c2 < 1.0:
            raise ConfigError(f"{path}: noise_c2 must lie strictly in (0, 1)")
        if noise_ratio <= 1.0:
            raise ConfigError(f"{path}: noise_variance_ratio must exceed 1")

    try:
        return ExperimentConfig(model=model, algorithms=algorithms, n=n,
                                m_over_n=m_over_n, trials=trials,
                                master_seed=master_seed, snr_grid_db=snr_grid,
                                noise_c2=noise_c2,
                                noise_variance_ratio=noise_ratio,
                                options=options)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def with_trials(config, trials):
    """Copy of a config with the trial count replaced."""
    return replace(config, trials=trials)
