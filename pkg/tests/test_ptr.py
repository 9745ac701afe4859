"""Tests for the processed time reversal iteration and its cross-checks."""

import numpy as np
import pytest

from timereversallab.boundary_ops import ProjectorSpec, boundary_norm, smooth_random_signal
from timereversallab.exceptions import GridValidationError
from timereversallab.measurement import NoiseCovarianceSpec, NoisyOracle
from timereversallab.ptr import (
    OMEGA_SAFETY_FACTOR,
    IterationConfig,
    averaged_noisy_iterate,
    cg_solve,
    conjugate_gradient,
    control_limit,
    dense_normal_solve,
    functional_decomposition,
    ptr_iterate,
    resolve_omega,
    solve_control,
)


@pytest.fixture(scope="module")
def source_1d(grid_1d):
    support = ProjectorSpec.full_boundary(grid_1d, grid_1d.horizon_T)
    return smooth_random_signal(grid_1d, np.random.default_rng(5), 0.1, support=support, taper=0.05)


@pytest.fixture(scope="module")
def window_1d():
    """Both end points, waves emitted during [T - 0.4, T]."""
    return ProjectorSpec.from_windows([((0, 1), 0.4)])


def relative_difference(grid, a, b):
    return float(boundary_norm(grid, a - b) / boundary_norm(grid, b))


# ============================================================================
# Configuration
# ============================================================================


@pytest.mark.parametrize(
    "arguments",
    [
        {"alpha": 0.0},
        {"alpha": 1.0},
        {"alpha": 0.1, "omega": -1.0},
        {"alpha": 0.1, "n_max": 0},
        {"alpha": 0.1, "tol_fp": 0.0},
        {"alpha": 0.1, "solver": "gmres"},
    ],
)
def test_invalid_iteration_settings(arguments):
    with pytest.raises(GridValidationError):
        IterationConfig(**arguments)


def test_with_alpha_keeps_the_other_settings():
    config = IterationConfig(alpha=0.1, omega=4.0, n_max=50, solver="cg", seed=3)
    changed = config.with_alpha(0.01, warm_start=np.ones((2, 3)))
    assert changed.alpha == 0.01
    assert (changed.omega, changed.n_max, changed.solver, changed.seed) == (4.0, 50, "cg", 3)
    assert changed.warm_start is not None


# ============================================================================
# Solvers
# ============================================================================


def test_ptr_matches_dense_solve(grid_1d, cached_1d, source_1d, window_1d):
    """The fixed-point iteration converges to the solution of the regularized normal equation."""
    config = IterationConfig(alpha=0.1, tol_fp=1e-10, n_max=20000)
    result = ptr_iterate(cached_1d, source_1d, window_1d, config)
    dense = dense_normal_solve(cached_1d, source_1d, window_1d, 0.1)
    assert result.converged
    assert relative_difference(grid_1d, result.h, dense) < 1e-5
    assert result.residual < 1e-6
    assert result.query_count == 2 * (result.steps + 2) + 2 * config.power_iterations
    assert result.rate is not None and 0 < result.rate < 1


def test_auto_omega_uses_the_power_estimate(grid_1d, cached_1d, window_1d):
    config = IterationConfig(alpha=0.1)
    omega = resolve_omega(cached_1d, window_1d.mask(grid_1d), config)
    assert omega > OMEGA_SAFETY_FACTOR
    assert resolve_omega(cached_1d, window_1d.mask(grid_1d), IterationConfig(alpha=0.1, omega=5.0)) == 5.0


def test_cg_matches_ptr(grid_1d, cached_1d, source_1d, window_1d):
    ptr = ptr_iterate(cached_1d, source_1d, window_1d, IterationConfig(alpha=0.1, tol_fp=1e-10, n_max=20000))
    cg = conjugate_gradient(cached_1d, source_1d, window_1d, 0.1, tol=1e-12)
    assert cg.converged
    assert cg.solver == "cg"
    assert relative_difference(grid_1d, cg.h, ptr.h) < 1e-4
    np.testing.assert_allclose(cg_solve(cached_1d, source_1d, window_1d, 0.1, tol=1e-12), cg.h)


def test_solve_control_dispatches_on_the_solver(grid_1d, cached_1d, source_1d, window_1d):
    result = solve_control(cached_1d, source_1d, window_1d, IterationConfig(alpha=0.01, solver="cg", tol_fp=1e-12))
    dense = dense_normal_solve(cached_1d, source_1d, window_1d, 0.01)
    assert result.solver == "cg"
    assert relative_difference(grid_1d, result.h, dense) < 1e-6


def test_zero_source_has_zero_control(grid_1d, cached_1d, window_1d):
    zero = np.zeros(grid_1d.signal_shape)
    result = ptr_iterate(cached_1d, zero, window_1d, IterationConfig(alpha=0.1))
    assert not result.h.any()
    assert result.converged and result.steps == 0
    assert not conjugate_gradient(cached_1d, zero, window_1d, 0.1).h.any()


def test_control_is_supported_in_the_window(grid_1d, cached_1d, source_1d, window_1d):
    result = ptr_iterate(cached_1d, source_1d, window_1d, IterationConfig(alpha=0.1, n_max=20))
    assert not result.h[~window_1d.mask(grid_1d)].any()
    assert not result.converged


def test_callback_sees_every_iterate(grid_1d, cached_1d, source_1d, window_1d):
    seen = []
    config = IterationConfig(alpha=0.1, omega=4.0, n_max=7)
    ptr_iterate(cached_1d, source_1d, window_1d, config, callback=lambda n, h: seen.append(n))
    assert seen == list(range(1, 8))


# ============================================================================
# Alpha path
# ============================================================================


@pytest.mark.slow
def test_control_error_decreases_along_the_alpha_path(fine_lattice_1d, window_1d):
    """Waves emitted in the last 0.4 of the horizon approach u^f(T) restricted to M(dM, 0.4) as alpha goes to 0."""
    grid, _, cached, validator = fine_lattice_1d
    support = ProjectorSpec.full_boundary(grid, grid.horizon_T)
    f = smooth_random_signal(grid, np.random.default_rng(5), 0.1, support=support, taper=0.05)
    schedule = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
    config = IterationConfig(alpha=0.1, solver="cg", tol_fp=1e-12)
    path = control_limit(cached, f, window_1d, schedule, config, validator=validator)
    errors = path.errors
    assert path.alphas == schedule
    assert all(later < earlier for earlier, later in zip(errors, errors[1:]))
    assert errors[-1] < 0.10
    assert path.query_count == sum(entry.result.query_count for entry in path.entries)
    assert path.final() is path.entries[-1].result.h


def test_tikhonov_functional_decreases_along_the_iteration(cached_1d, validator_1d, source_1d, window_1d):
    """Every PTR step is a gradient step on the Tikhonov functional, which therefore never grows."""
    alpha = 0.1
    iterates = []
    config = IterationConfig(alpha=alpha, n_max=25)
    ptr_iterate(cached_1d, source_1d, window_1d, config, callback=lambda n, h: iterates.append(h.copy()))
    values = [validator_1d.tikhonov_functional(source_1d, h, alpha) for h in iterates]
    assert len(values) == 25
    tolerance = 1e-6 * values[0]
    assert all(later <= earlier + tolerance for earlier, later in zip(values, values[1:]))
    assert values[-1] < values[0]


def test_alpha_schedule_must_decrease(cached_1d, source_1d, window_1d):
    config = IterationConfig(alpha=0.1)
    with pytest.raises(GridValidationError):
        control_limit(cached_1d, source_1d, window_1d, [1e-2, 1e-1], config)
    with pytest.raises(GridValidationError):
        control_limit(cached_1d, source_1d, window_1d, [], config)


def test_functional_decomposition(grid_1d, cached_1d, validator_1d, source_1d, window_1d):
    """The Tikhonov functional splits into the part outside N and the fit inside N."""
    h = cg_solve(cached_1d, source_1d, window_1d, 0.01, tol=1e-12)
    direct, decomposed = functional_decomposition(validator_1d, source_1d, h, window_1d, 0.01)
    assert decomposed == pytest.approx(direct, rel=0.05)
    assert direct == pytest.approx(validator_1d.tikhonov_functional(source_1d, h, 0.01), rel=1e-10)


# ============================================================================
# Noise averaging
# ============================================================================


def test_noise_free_average_is_the_mean_ptr_iterate(grid_1d, cached_1d, source_1d, window_1d):
    config = IterationConfig(alpha=0.5, omega=3.0, n_max=6, tol_fp=1e-14)
    iterates = []
    ptr_iterate(cached_1d, source_1d, window_1d, config, callback=lambda n, h: iterates.append(h.copy()))

    silent = NoiseCovarianceSpec(sigma=0.0, correlation_time=0.05, correlation_length=0.1)
    noisy = NoisyOracle(cached_1d, silent, seed=1)
    averaged = averaged_noisy_iterate(noisy, source_1d, window_1d, config, k_avg=6, checkpoints=[2, 6, 9])
    np.testing.assert_allclose(averaged.average, np.mean(iterates, axis=0), atol=1e-12)
    np.testing.assert_allclose(averaged.checkpoints[2], np.mean(iterates[:2], axis=0), atol=1e-12)
    assert sorted(averaged.checkpoints) == [2, 6]
    assert averaged.query_count == 12
    with pytest.raises(GridValidationError):
        averaged_noisy_iterate(noisy, source_1d, window_1d, config, k_avg=0)


@pytest.mark.slow
def test_noise_average_error_decays_like_inverse_square_root(grid_1d, cached_1d, source_1d, window_1d):
    """Started at h(alpha), the averaged noisy iterate approaches h(alpha) at the rate K^(-1/2)."""
    alpha = 0.9
    clean = dense_normal_solve(cached_1d, source_1d, window_1d, alpha)
    config = IterationConfig(alpha=alpha, warm_start=clean)
    noise = NoiseCovarianceSpec(sigma=0.01, correlation_time=0.05, correlation_length=0.1)
    k_values = [16, 32, 64, 128, 256, 512]

    squared = np.zeros(len(k_values))
    replicas = 8
    for replica in range(replicas):
        noisy = NoisyOracle(cached_1d, noise, seed=100 + replica)
        averaged = averaged_noisy_iterate(noisy, source_1d, window_1d, config, k_avg=512, checkpoints=k_values)
        squared += [float(boundary_norm(grid_1d, averaged.checkpoints[k] - clean)) ** 2 for k in k_values]
    rms = np.sqrt(squared / replicas)
    slope, _ = np.polyfit(np.log(k_values), np.log(rms), 1)
    assert -0.65 <= slope <= -0.35
