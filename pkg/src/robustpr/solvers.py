"""Iterative phase retrieval solvers.

Four algorithms share one toolkit: gradient descent on the intensity
least-squares objective (wf_solve), alternating phase/least-squares rounds
for amplitude targets (gs_solve), and two robust outer loops that wrap
those as subproblem solvers inside an l1 / augmented-Lagrangian splitting
(admm_intensity, admm_amplitude). Spectral initialization and the
soft-threshold proximity operator live here too.

The ADMM loops solve

    min ||z||_1  subject to  z = m(Ax) - observations

with m(.) the elementwise |.|^2 or |.|, alternating a warm-started inner
solve for x, elementwise soft-thresholding for z, and a dual ascent step.
Outliers end up absorbed by the large entries of z.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .metrics import nmse
from .numerics import power_iteration
from .problem import ObservationKind


class Termination(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"


@dataclass
class SolverOptions:
    """Knobs shared by the outer loops.

    inner_iters=None picks the model default: 50 gradient steps per outer
    iteration for the intensity loop, 25 alternating rounds for the
    amplitude loop. wf_step_params is the (tau0, mu_max) stepsize ramp of
    the gradient inner solver.
    """

    rho: float = 1.0
    max_outer_iters: int = 200
    outer_tol: float = 1e-6
    inner_iters: int | None = None
    wf_step_params: tuple = (330.0, 0.2)

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("need at least one outer iteration")
        if self.outer_tol < 0:
            raise ValueError("outer_tol must be nonnegative")
        if self.inner_iters is not None and self.inner_iters < 1:
            raise ValueError("inner_iters must be positive when given")


@dataclass
class AdmmState:
    """Snapshot of the splitting variables after one outer iteration."""

    x: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    iteration: int


@dataclass
class IterateTrace:
    """Per-iteration history, including the starting point.

    nmse is None when the instance carries no ground truth. primal_residual
    stores the RMS ||r||_2 / sqrt(M) of the splitting constraint violation,
    the quantity the stopping rule watches.
    """

    nmse: list | None
    objective: list
    primal_residual: list

    def __len__(self):
        return len(self.objective)


@dataclass
class SolverResult:
    estimate: np.ndarray
    trace: IterateTrace
    termination: Termination

    @property
    def iterations(self):
        return len(self.trace) - 1


def soft_threshold(u, a):
    """sgn(u) * max(|u| - a, 0), elementwise on arrays."""
    if a < 0:
        raise ValueError("threshold must be nonnegative")
    return np.sign(u) * np.maximum(np.abs(u) - a, 0.0)


def prox_l1(c, threshold):
    """Proximity operator of threshold * ||.||_1, i.e. elementwise shrinkage.

    Exact minimizer of 0.5 ||z - c||^2 + threshold ||z||_1.
    """
    c = np.asarray(c)
    return soft_threshold(c, threshold)


def spectral_init(ensemble, observations, max_iters=200, tol=1e-6):
    """Starting point from the leading eigenvector of the weighted covariance.

    Builds Y = (1/M) A^H diag(w) A with w the intensities (negatives
    clamped to zero) or the squared amplitudes, applies it matrix-free
    inside power iteration, and scales the eigenvector to norm
    sqrt(mean(w)), the natural magnitude estimate.
    """
    values = observations.values
    if observations.kind is ObservationKind.INTENSITY:
        w = np.maximum(values, 0.0)
    else:
        w = values ** 2
    if not np.any(w > 0):
        raise ValueError("all-zero observations give no spectral direction")
    m = ensemble.m

    def apply(v):
        return ensemble.adjoint(w * ensemble.forward(v)) / m

    v, _ = power_iteration(apply, ensemble.n, max_iters=max_iters, tol=tol)
    return v * np.sqrt(np.mean(w))


def wf_solve(ensemble, target, x_init, iters, step_params=(330.0, 0.2),
             t_start=0, objectives=None, on_iterate=None):
    """Wirtinger gradient descent on the intensity least-squares objective.

    Minimizes f(x) = (1/4M) sum_i (|a_i^H x|^2 - target_i)^2 with the
    ramped stepsize mu_t = min(1 - exp(-t/tau0), mu_max), normalized by
    ||x_init||^2. Negative target entries are legitimate here; they arise
    from the shifted subproblems of the robust outer loop.

    t_start continues the ramp across warm-started calls (the outer loop
    passes the cumulative inner-step count). If given, `objectives`
    collects f at each visited iterate and on_iterate(t, x) fires after
    every step with the updated iterate.
    """
    tau0, mu_max = step_params
    x = np.asarray(x_init, dtype=complex).copy()
    scale = float(np.linalg.norm(x) ** 2)
    if scale == 0.0:
        raise ValueError("zero starting point leaves the stepsize undefined")
    m = ensemble.m
    target = np.asarray(target, dtype=float)
    for t in range(int(iters)):
        g = ensemble.forward(x)
        r = np.abs(g) ** 2 - target
        if objectives is not None:
            objectives.append(float(np.sum(r ** 2) / (4.0 * m)))
        grad = ensemble.adjoint(r * g) / m
        mu = min(1.0 - np.exp(-(t_start + t + 1) / tau0), mu_max)
        x -= (mu / scale) * grad
        if on_iterate is not None:
            on_iterate(t, x)
    return x


def gs_solve(ensemble, target, x_init, iters, objectives=None, on_iterate=None):
    """Alternating phase/least-squares rounds for amplitude targets.

    Each round fixes the phase at its exact minimizer for the current
    iterate, phi_i = angle((Ax)_i) plus a half turn wherever target_i < 0
    (zero modulus gets phase 0), then solves the resulting least-squares
    problem through the ensemble's cached factorization. Both half-steps
    are exact minimizers of ||Ax - target * exp(j phi)||^2, so the
    recorded objective never increases, negative targets included.
    """
    x = np.asarray(x_init, dtype=complex).copy()
    target = np.asarray(target, dtype=float)
    folded = np.abs(target)
    g = ensemble.forward(x)
    for k in range(int(iters)):
        mag = np.abs(g)
        unit = np.ones_like(g)
        nz = mag > 0
        unit[nz] = g[nz] / mag[nz]
        rhs = folded * unit  # equals target * exp(j phi) at the minimizing phi
        x = ensemble.solve_lstsq(rhs)
        g = ensemble.forward(x)
        if objectives is not None:
            objectives.append(float(np.linalg.norm(g - rhs) ** 2))
        if on_iterate is not None:
            on_iterate(k, x)
    return x


def _trace_point(trace, truth, x, objective, residual_rms):
    if trace.nmse is not None:
        trace.nmse.append(nmse(x, truth))
    trace.objective.append(objective)
    trace.primal_residual.append(residual_rms)


def admm_intensity(instance, opts, x_init, on_iteration=None):
    """Robust phase retrieval from intensities via l1 residual splitting.

    Splits the l1 criterion on z = |Ax|^2 - y. Each outer iteration runs a
    fixed budget of warm-started gradient steps on the shifted target
    z + y - lam/rho, shrinks the shifted residual into z, then takes the
    dual ascent step lam += rho * (|Ax|^2 - y - z). Stops when the primal
    residual RMS drops below opts.outer_tol.

    on_iteration(state, residual) fires after each outer iteration with a
    snapshot of the splitting variables and the raw residual vector.
    """
    obs = instance.observations
    if obs.kind is not ObservationKind.INTENSITY:
        raise ValueError("intensity solver got amplitude observations")
    ens = instance.ensemble
    y = obs.values
    m = ens.m
    rho = opts.rho
    inner = opts.inner_iters if opts.inner_iters is not None else 50
    truth = instance.truth

    x = np.asarray(x_init, dtype=complex).copy()
    z = np.zeros(m)
    lam = np.zeros(m)
    trace = IterateTrace(nmse=[] if truth is not None else None,
                         objective=[], primal_residual=[])
    ax2 = np.abs(ens.forward(x)) ** 2
    _trace_point(trace, truth, x, float(np.sum(np.abs(y - ax2))),
                 float(np.linalg.norm(ax2 - y - z) / np.sqrt(m)))

    termination = Termination.MAX_ITERS
    steps = 0  # cumulative inner count keeps the stepsize ramp monotone
    for k in range(opts.max_outer_iters):
        x = wf_solve(ens, z + y - lam / rho, x, inner,
                     step_params=opts.wf_step_params, t_start=steps)
        steps += inner
        ax2 = np.abs(ens.forward(x)) ** 2
        z = prox_l1(ax2 - y + lam / rho, 1.0 / rho)
        r = ax2 - y - z
        lam = lam + rho * r
        rms = float(np.linalg.norm(r) / np.sqrt(m))
        _trace_point(trace, truth, x, float(np.sum(np.abs(y - ax2))), rms)
        if on_iteration is not None:
            on_iteration(AdmmState(x=x.copy(), z=z.copy(), lam=lam.copy(),
                                   iteration=k + 1), r.copy())
        if rms <= opts.outer_tol:
            termination = Termination.CONVERGED
            break
    return SolverResult(estimate=x, trace=trace, termination=termination)


def admm_amplitude(instance, opts, x_init, on_iteration=None):
    """Robust phase retrieval from amplitudes via l1 residual splitting.

    Same splitting as the intensity loop with |Ax| in place of |Ax|^2 and
    the alternating rounds of gs_solve as the inner solver for the shifted
    target z + b - lam/rho.
    """
    obs = instance.observations
    if obs.kind is not ObservationKind.AMPLITUDE:
        raise ValueError("amplitude solver got intensity observations")
    ens = instance.ensemble
    b = obs.values
    m = ens.m
    rho = opts.rho
    inner = opts.inner_iters if opts.inner_iters is not None else 25
    truth = instance.truth

    x = np.asarray(x_init, dtype=complex).copy()
    z = np.zeros(m)
    lam = np.zeros(m)
    trace = IterateTrace(nmse=[] if truth is not None else None,
                         objective=[], primal_residual=[])
    ax = np.abs(ens.forward(x))
    _trace_point(trace, truth, x, float(np.sum(np.abs(b - ax))),
                 float(np.linalg.norm(ax - b - z) / np.sqrt(m)))

    termination = Termination.MAX_ITERS
    for k in range(opts.max_outer_iters):
        x = gs_solve(ens, z + b - lam / rho, x, inner)
        ax = np.abs(ens.forward(x))
        z = prox_l1(ax - b + lam / rho, 1.0 / rho)
        r = ax - b - z
        lam = lam + rho * r
        rms = float(np.linalg.norm(r) / np.sqrt(m))
        _trace_point(trace, truth, x, float(np.sum(np.abs(b - ax))), rms)
        if on_iteration is not None:
            on_iteration(AdmmState(x=x.copy(), z=z.copy(), lam=lam.copy(),
                                   iteration=k + 1), r.copy())
        if rms <= opts.outer_tol:
            termination = Termination.CONVERGED
            break
    return SolverResult(estimate=x, trace=trace, termination=termination)
