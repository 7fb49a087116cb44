"""Solver checks: prox oracles, gradient finite differences, monotonicity,
dual-update bookkeeping, and desk-scale recovery runs."""

import numpy as np
import pytest

from robustpr.metrics import nmse
from robustpr.numerics import sample_complex_gaussian
from robustpr.problem import (
    MeasurementEnsemble,
    Observations,
    ObservationKind,
    ProblemInstance,
    calibrate_gmm,
    generate_instance,
    observe,
    sample_gmm_noise,
)
from robustpr.solvers import (
    SolverOptions,
    Termination,
    admm_amplitude,
    admm_intensity,
    gs_solve,
    prox_l1,
    soft_threshold,
    spectral_init,
    wf_solve,
)


def make_instance(seed, n=32, m=256, kind=ObservationKind.INTENSITY,
                  snr_db=None):
    """Seeded trial data: returns (instance, x0) with spectral init."""
    rng = np.random.default_rng(seed)
    truth, ensemble = generate_instance(n, m, rng)
    values = observe(ensemble, truth, kind).values
    if snr_db is not None:
        model = calibrate_gmm(truth, snr_db)
        values = values + sample_gmm_noise(model, m, rng)
    obs = Observations(values=values, kind=kind)
    instance = ProblemInstance(truth=truth, ensemble=ensemble,
                               observations=obs, seed=seed)
    return instance, spectral_init(ensemble, obs)


# ---------------------------------------------------------------------------
# soft threshold and prox

def test_soft_threshold_branches():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-0.5, 1.0) == 0.0
    assert soft_threshold(-2.5, 1.0) == -1.5


def test_soft_threshold_rejects_negative_threshold():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


def test_soft_threshold_shrinks_toward_zero():
    rng = np.random.default_rng(0)
    u = rng.standard_normal(200) * 3
    for a in (0.0, 0.3, 1.0, 5.0):
        s = soft_threshold(u, a)
        assert np.all(np.abs(s) <= np.abs(u) + 1e-15)
        assert np.all(s * u >= 0.0)


def test_prox_l1_examples():
    assert np.allclose(prox_l1(np.array([2.0, -0.3, 0.0]), 1.0),
                       [1.0, 0.0, 0.0])
    c = np.random.default_rng(1).standard_normal(20)
    assert np.array_equal(prox_l1(c, 0.0), c)


def test_prox_l1_matches_grid_search():
    # prox separates per coordinate, so a scalar grid is an exact oracle
    rng = np.random.default_rng(2)
    for _ in range(10):
        c = rng.standard_normal(5)
        t = rng.uniform(0.1, 2.0)
        z = prox_l1(c, t)
        for i in range(5):
            span = max(2 * abs(c[i]), 1e-3)
            grid = np.arange(-span, span, 1e-5)
            vals = 0.5 * (grid - c[i]) ** 2 + t * np.abs(grid)
            assert abs(z[i] - grid[np.argmin(vals)]) <= 1e-4


def test_prox_l1_is_the_minimizer_under_perturbation():
    rng = np.random.default_rng(3)
    c = rng.standard_normal(8)
    t = 0.7
    z = prox_l1(c, t)
    best = 0.5 * np.sum((z - c) ** 2) + t * np.sum(np.abs(z))
    for _ in range(1000):
        delta = rng.standard_normal(8)
        delta *= rng.uniform(0, 0.1) / np.linalg.norm(delta)
        zp = z + delta
        trial = 0.5 * np.sum((zp - c) ** 2) + t * np.sum(np.abs(zp))
        assert trial >= best - 1e-12


# ---------------------------------------------------------------------------
# spectral initialization

def test_spectral_init_diagonal_case():
    ensemble = MeasurementEnsemble(np.eye(3))
    obs = Observations(values=np.array([5.0, 1.0, 1.0]), kind="intensity")
    x0 = spectral_init(ensemble, obs)
    # leading eigenvector of diag(5,1,1)/3 is e1; scale is sqrt(mean w)
    assert abs(x0[0]) / np.linalg.norm(x0) >= 0.999
    assert np.linalg.norm(x0) ** 2 == pytest.approx(7.0 / 3.0, rel=1e-6)


def test_spectral_init_correlates_with_truth():
    hits = 0
    for seed in range(100):
        instance, x0 = make_instance(seed, n=16, m=128)
        truth = instance.truth
        corr = abs(np.vdot(x0, truth)) / (np.linalg.norm(x0)
                                          * np.linalg.norm(truth))
        hits += corr >= 0.5
    assert hits >= 95


def test_spectral_init_amplitude_weights_square():
    # amplitude observations b weight the covariance by b^2, identical to
    # feeding the matching intensities
    instance, _ = make_instance(7, n=8, m=64, kind=ObservationKind.AMPLITUDE)
    b = instance.observations.values
    from_amplitude = spectral_init(instance.ensemble, instance.observations)
    from_intensity = spectral_init(
        instance.ensemble, Observations(values=b ** 2, kind="intensity"))
    assert np.array_equal(from_amplitude, from_intensity)


def test_spectral_init_negative_intensities_are_clipped():
    instance, _ = make_instance(9, n=8, m=64)
    values = instance.observations.values.copy()
    values[:5] = -values[:5]
    x0 = spectral_init(instance.ensemble,
                       Observations(values=values, kind="intensity"))
    w = np.maximum(values, 0.0)
    assert np.linalg.norm(x0) ** 2 == pytest.approx(w.mean(), rel=1e-12)


def test_spectral_init_rejects_all_zero():
    _, ensemble = generate_instance(4, 16, np.random.default_rng(8))
    with pytest.raises(ValueError):
        spectral_init(ensemble, Observations(values=np.zeros(16),
                                             kind="intensity"))


# ---------------------------------------------------------------------------
# gradient inner solver

def test_wf_stationary_at_global_minimizer():
    instance, _ = make_instance(10, n=8, m=64)
    truth = instance.truth
    out = wf_solve(instance.ensemble, instance.observations.values, truth, 5)
    assert np.array_equal(out, truth)  # gradient is exactly zero there


def test_wf_zero_iters_returns_start():
    instance, x0 = make_instance(11, n=8, m=64)
    out = wf_solve(instance.ensemble, instance.observations.values, x0, 0)
    assert np.array_equal(out, x0)


def test_wf_rejects_zero_start():
    instance, _ = make_instance(11, n=8, m=64)
    with pytest.raises(ValueError):
        wf_solve(instance.ensemble, instance.observations.values,
                 np.zeros(8, dtype=complex), 5)


def test_wf_gradient_matches_finite_differences():
    # recover the gradient from a single step (first stepsize is known in
    # closed form), then central-difference the objective over all 2N real
    # coordinates
    rng = np.random.default_rng(12)
    for trial in range(5):
        n = int(rng.integers(2, 9))
        m = 8 * n
        instance, _ = make_instance(100 + trial, n=n, m=m)
        ensemble = instance.ensemble
        # shift the targets so some go negative, exercising the signed branch
        target = instance.observations.values - rng.standard_normal(m)
        x = sample_complex_gaussian(rng, n)

        mu1 = 1.0 - np.exp(-1.0 / 330.0)
        x_new = wf_solve(ensemble, target, x, 1)
        grad = (x - x_new) * (np.linalg.norm(x) ** 2) / mu1

        def f(v):
            resid = np.abs(ensemble.matrix @ v) ** 2 - target
            return np.sum(resid ** 2) / (4 * m)

        h = 1e-6
        fd = np.zeros(n, dtype=complex)
        for j in range(n):
            e = np.zeros(n, dtype=complex)
            e[j] = h
            d_re = (f(x + e) - f(x - e)) / (2 * h)
            e[j] = 1.0j * h
            d_im = (f(x + e) - f(x - e)) / (2 * h)
            # pack the steepest-descent direction over R^{2n} as a complex
            # vector: real part moves Re(x_j), imaginary part moves Im(x_j)
            fd[j] = d_re + 1.0j * d_im
        assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) <= 1e-5


def test_wf_stepsize_ramp_saturates():
    # far into the schedule the update is exactly mu_max/||x0||^2 along the
    # analytic gradient
    instance, x0 = make_instance(13, n=8, m=64)
    ensemble = instance.ensemble
    target = instance.observations.values
    g = ensemble.matrix @ x0
    grad = ensemble.matrix.conj().T @ ((np.abs(g) ** 2 - target) * g) / 64
    expected = x0 - (0.2 / np.linalg.norm(x0) ** 2) * grad
    out = wf_solve(ensemble, target, x0, 1, t_start=10 ** 6)
    assert np.allclose(out, expected, atol=1e-12)


def test_wf_objective_recording():
    instance, x0 = make_instance(14, n=8, m=64)
    objectives = []
    wf_solve(instance.ensemble, instance.observations.values, x0, 20,
             objectives=objectives)
    assert len(objectives) == 20
    assert np.all(np.isfinite(objectives))
    assert objectives[-1] < objectives[0]


def test_wf_noise_free_recovery():
    hits = 0
    for seed in range(100):
        instance, x0 = make_instance(200 + seed)
        out = wf_solve(instance.ensemble, instance.observations.values,
                       x0, 500)
        hits += nmse(out, instance.truth) <= 1e-8
    assert hits >= 90


# ---------------------------------------------------------------------------
# alternating inner solver

def test_gs_fixed_point_at_truth():
    instance, _ = make_instance(15, n=8, m=64, kind=ObservationKind.AMPLITUDE)
    truth = instance.truth
    out = gs_solve(instance.ensemble, instance.observations.values, truth, 3)
    assert np.linalg.norm(out - truth) < 1e-10


def test_gs_zero_iters_returns_start():
    instance, x0 = make_instance(15, n=8, m=64, kind=ObservationKind.AMPLITUDE)
    out = gs_solve(instance.ensemble, instance.observations.values, x0, 0)
    assert np.array_equal(out, x0)


def test_gs_objective_monotone_even_with_negative_targets():
    rng = np.random.default_rng(16)
    for _ in range(20):
        instance, x0 = make_instance(int(rng.integers(10 ** 6)), n=8, m=64,
                                     kind=ObservationKind.AMPLITUDE)
        target = rng.standard_normal(64)  # heavily signed target
        objectives = []
        gs_solve(instance.ensemble, target, x0, 30, objectives=objectives)
        drops = np.diff(objectives)
        assert drops.max() <= 1e-10 * max(1.0, objectives[0])


def test_gs_zero_modulus_entry_is_defined():
    ensemble = MeasurementEnsemble(
        np.array([[1.0 + 0j, 0.0], [0.0, 1.0], [1.0, -1.0]]))
    x0 = np.array([1.0 + 0j, 1.0])  # third row lands exactly on zero
    target = np.array([1.0, 1.0, 1.0])
    out = gs_solve(ensemble, target, x0, 5)
    assert np.all(np.isfinite(out))


def test_gs_noise_free_recovery():
    hits = 0
    for seed in range(100):
        instance, x0 = make_instance(300 + seed,
                                     kind=ObservationKind.AMPLITUDE)
        out = gs_solve(instance.ensemble, instance.observations.values,
                       x0, 500)
        hits += nmse(out, instance.truth) <= 1e-8
    assert hits >= 90


# ---------------------------------------------------------------------------
# outer ADMM loops

def test_admm_rejects_mismatched_observation_kind():
    amp_inst, amp_x0 = make_instance(17, kind=ObservationKind.AMPLITUDE)
    int_inst, int_x0 = make_instance(17, kind=ObservationKind.INTENSITY)
    opts = SolverOptions()
    with pytest.raises(ValueError):
        admm_intensity(amp_inst, opts, amp_x0)
    with pytest.raises(ValueError):
        admm_amplitude(int_inst, opts, int_x0)


def test_admm_dual_update_identity_intensity():
    instance, x0 = make_instance(18, snr_db=12.0)
    opts = SolverOptions(rho=1.0, max_outer_iters=30)
    lam_prev = [np.zeros(256)]
    worst = [0.0]

    def check(state, residual):
        step = state.lam - lam_prev[0]
        worst[0] = max(worst[0], np.abs(step - opts.rho * residual).max())
        lam_prev[0] = state.lam

    result = admm_intensity(instance, opts, x0, on_iteration=check)
    assert result.iterations == 30
    assert worst[0] <= 1e-12


def test_admm_dual_update_identity_amplitude():
    instance, x0 = make_instance(19, kind=ObservationKind.AMPLITUDE,
                                 snr_db=12.0)
    opts = SolverOptions(rho=1.0, max_outer_iters=30)
    lam_prev = [np.zeros(256)]
    worst = [0.0]

    def check(state, residual):
        step = state.lam - lam_prev[0]
        worst[0] = max(worst[0], np.abs(step - opts.rho * residual).max())
        lam_prev[0] = state.lam

    admm_amplitude(instance, opts, x0, on_iteration=check)
    assert worst[0] <= 1e-12


def test_admm_z_update_is_the_prox_point():
    # reconstruct the prox argument c from the recorded state: the split
    # variable must equal prox_l1(c, 1/rho) with c = residual + z + lam_prev
    # scaled terms folded in
    instance, x0 = make_instance(20, snr_db=15.0)
    rho = 2.0
    opts = SolverOptions(rho=rho, max_outer_iters=15)
    obs = instance.observations.values
    lam_prev = [np.zeros(256)]
    worst = [0.0]

    def check(state, residual):
        misfit = np.abs(instance.ensemble.forward(state.x)) ** 2 - obs
        c = misfit + lam_prev[0] / rho
        worst[0] = max(worst[0],
                       np.abs(state.z - prox_l1(c, 1.0 / rho)).max())
        lam_prev[0] = state.lam

    admm_intensity(instance, opts, x0, on_iteration=check)
    assert worst[0] <= 1e-12


def test_admm_trace_shape_and_initial_point():
    instance, x0 = make_instance(21, snr_db=15.0)
    opts = SolverOptions(max_outer_iters=12)
    result = admm_intensity(instance, opts, x0)
    trace = result.trace
    assert len(trace) == result.iterations + 1
    assert len(trace.nmse) == len(trace.objective) == len(trace.primal_residual)
    assert trace.nmse[0] == pytest.approx(nmse(x0, instance.truth))
    assert result.termination is Termination.MAX_ITERS


def test_admm_without_truth_skips_nmse():
    instance, x0 = make_instance(22, snr_db=15.0)
    anon = ProblemInstance(truth=None, ensemble=instance.ensemble,
                           observations=instance.observations)
    result = admm_intensity(anon, SolverOptions(max_outer_iters=5), x0)
    assert result.trace.nmse is None
    assert len(result.trace.objective) == 6


def test_admm_noise_free_converges_and_recovers():
    # clean observations make the l1 objective collapse to zero, so the
    # residual tolerance should fire well before the iteration cap
    errs = []
    for seed in range(20):
        instance, x0 = make_instance(400 + seed)
        result = admm_intensity(instance, SolverOptions(max_outer_iters=100),
                                x0)
        assert result.termination is Termination.CONVERGED
        errs.append(nmse(result.estimate, instance.truth))
    assert np.median(errs) <= 1e-6


def test_admm_amplitude_noise_free_converges_and_recovers():
    errs = []
    for seed in range(20):
        instance, x0 = make_instance(500 + seed,
                                     kind=ObservationKind.AMPLITUDE)
        result = admm_amplitude(instance, SolverOptions(max_outer_iters=100),
                                x0)
        assert result.termination is Termination.CONVERGED
        errs.append(nmse(result.estimate, instance.truth))
    assert np.median(errs) <= 1e-6


def test_admm_phase_rotation_equivariance():
    # same observations with a rotated ground truth: the aligned error
    # trace cannot depend on the global phase of the reference
    instance, x0 = make_instance(23, snr_db=12.0)
    rotated = ProblemInstance(truth=instance.truth * np.exp(0.8j),
                              ensemble=instance.ensemble,
                              observations=instance.observations)
    opts = SolverOptions(max_outer_iters=20)
    a = admm_intensity(instance, opts, x0)
    b = admm_intensity(rotated, opts, x0)
    assert np.max(np.abs(np.array(a.trace.nmse)
                         - np.array(b.trace.nmse))) <= 1e-10


def test_admm_noisy_intensity_beats_spectral_start():
    instance, x0 = make_instance(24, snr_db=15.0)
    result = admm_intensity(instance, SolverOptions(max_outer_iters=100), x0)
    assert result.trace.nmse[-1] < 1e-2 * result.trace.nmse[0]


def test_solver_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(rho=0.0)
    with pytest.raises(ValueError):
        SolverOptions(max_outer_iters=0)
    with pytest.raises(ValueError):
        SolverOptions(outer_tol=-1.0)
    with pytest.raises(ValueError):
        SolverOptions(inner_iters=0)
    assert SolverOptions().inner_iters is None  # model default applies later
