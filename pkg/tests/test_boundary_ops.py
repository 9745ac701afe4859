"""Tests for the boundary signal operators."""

import numpy as np
import pytest

from timereversallab.boundary_ops import (
    FilterConvention,
    FilterVariant,
    ProjectorSpec,
    boundary_norm,
    boundary_patch,
    correlate,
    inner_product_boundary,
    mollify,
    project,
    smooth_bump,
    smooth_random_signal,
    time_filter,
    time_reverse,
    time_weights,
    unit_area_pulse,
)
from timereversallab.exceptions import GridValidationError

# ============================================================================
# Reversal, filter and inner product
# ============================================================================


def test_constant_signal_norm(grid_1d):
    """<1, 1> integrates two end points over [0, 2T] with the trapezoid rule."""
    ones = np.ones(grid_1d.signal_shape)
    assert inner_product_boundary(grid_1d, ones, ones) == pytest.approx(4.0 * grid_1d.horizon_T, rel=1e-12)


def test_time_weights_halve_the_end_samples(grid_1d):
    weights = time_weights(grid_1d)
    assert weights[0] == weights[-1] == pytest.approx(0.5 * grid_1d.dt)
    np.testing.assert_allclose(weights[1:-1], grid_1d.dt)
    assert weights.sum() == pytest.approx(2 * grid_1d.horizon_T, rel=1e-12)


def test_inner_product_of_a_ramp_is_exact(grid_2d):
    """The trapezoid rule integrates t exactly: <t, 1> = 2T^2 per unit of boundary length."""
    ramp = np.tile(grid_2d.times, (grid_2d.n_boundary, 1))
    ones = np.ones(grid_2d.signal_shape)
    expected = 2 * grid_2d.horizon_T**2 * grid_2d.surface_weights.sum()
    assert inner_product_boundary(grid_2d, ramp, ones) == pytest.approx(expected, rel=1e-12)


def test_time_reverse_is_an_isometric_involution(grid_1d, rng):
    f = rng.standard_normal(grid_1d.signal_shape)
    np.testing.assert_array_equal(time_reverse(time_reverse(f)), f)
    assert boundary_norm(grid_1d, time_reverse(f)) == pytest.approx(boundary_norm(grid_1d, f), rel=1e-12)
    assert time_reverse(f)[0, 0] == f[0, -1]


def test_filter_variants_are_transposes(grid_1d, rng):
    """<J_intro f, g> = <f, J_section2 g> in the boundary inner product."""
    f = rng.standard_normal(grid_1d.signal_shape)
    g = rng.standard_normal(grid_1d.signal_shape)
    left = inner_product_boundary(grid_1d, time_filter(grid_1d, f, FilterVariant.INTRO), g)
    right = inner_product_boundary(grid_1d, f, time_filter(grid_1d, g, FilterVariant.SECTION2))
    assert left == pytest.approx(right, rel=1e-10)


def test_intro_filter_support(grid_1d):
    """The INTRO kernel only reads samples before min(t, 2T - t) and vanishes at both ends of the horizon."""
    ones = np.ones(grid_1d.signal_shape)
    filtered = time_filter(grid_1d, ones, FilterVariant.INTRO)
    assert filtered[0, 0] == 0.0
    assert filtered[0, -1] == 0.0
    n = grid_1d.n_half
    # k(N) = N - 1 collects every other sample of 0..N-1, the one at t = 0 with half weight
    collected = len(range((n - 1) % 2, n, 2)) - (0.5 if (n - 1) % 2 == 0 else 0.0)
    assert filtered[0, n] == pytest.approx(grid_1d.dt * collected, rel=1e-12)


def test_filter_accepts_batches(grid_1d, rng):
    batch = rng.standard_normal((3, *grid_1d.signal_shape))
    filtered = time_filter(grid_1d, batch, FilterVariant.SECTION2)
    np.testing.assert_allclose(filtered[1], time_filter(grid_1d, batch[1], FilterVariant.SECTION2))


def test_convention_sign_is_validated():
    with pytest.raises(GridValidationError):
        FilterConvention(FilterVariant.INTRO, 0)
    assert str(FilterConvention(FilterVariant.SECTION2, -1)) == "section2-"


# ============================================================================
# Projectors
# ============================================================================


def test_projector_windows(grid_1d):
    """A window of length 0.3 keeps the samples in [T - 0.3, T] at its patch only."""
    mask = ProjectorSpec.from_windows([((0,), 0.3)]).mask(grid_1d)
    assert mask[0].sum() == 22
    assert not mask[1].any()
    assert mask[0, grid_1d.n_half]
    assert not mask[0, grid_1d.n_half + 1]
    single = ProjectorSpec.from_windows([((1,), 0.0)]).mask(grid_1d)
    assert single.sum() == 1


def test_full_boundary_projector_covers_first_half(grid_1d):
    mask = ProjectorSpec.full_boundary(grid_1d, grid_1d.horizon_T).mask(grid_1d)
    assert mask[:, : grid_1d.n_half + 1].all()
    assert not mask[:, grid_1d.n_half + 1 :].any()


def test_projector_is_hashable_and_unions(grid_1d):
    first = ProjectorSpec.from_windows([((0,), 0.3)])
    second = ProjectorSpec.from_windows([((1,), 0.5)])
    union = first.union(second)
    assert len(union.windows) == 2
    assert {first: 1, ProjectorSpec.from_windows([([0], 0.3)]): 2}[first] == 2
    np.testing.assert_array_equal(union.mask(grid_1d), first.mask(grid_1d) | second.mask(grid_1d))
    assert ProjectorSpec().is_empty


@pytest.mark.parametrize("windows", [[((5,), 0.3)], [((0,), 1.5)]])
def test_projector_outside_the_lattice_is_rejected(grid_1d, windows):
    with pytest.raises(GridValidationError):
        ProjectorSpec.from_windows(windows).mask(grid_1d)


def test_empty_patch_is_rejected():
    with pytest.raises(GridValidationError):
        ProjectorSpec.from_windows([((), 0.3)])


def test_project_is_idempotent(grid_1d, rng):
    projector = ProjectorSpec.from_windows([((0, 1), 0.4)])
    f = rng.standard_normal(grid_1d.signal_shape)
    once = project(grid_1d, f, projector)
    np.testing.assert_array_equal(project(grid_1d, once, projector), once)
    assert not once[~projector.mask(grid_1d)].any()


# ============================================================================
# Patches and test signals
# ============================================================================


def test_boundary_patches(grid_1d, grid_2d):
    assert boundary_patch(grid_1d, 1, 10.0) == (1,)
    assert boundary_patch(grid_2d, 10, 2 * grid_2d.h) == (8, 9, 10, 11, 12)
    wrapped = boundary_patch(grid_2d, 0, grid_2d.h)
    assert set(wrapped) == {0, 1, grid_2d.n_boundary - 1}


def test_unit_area_pulse(grid_1d):
    pulse = unit_area_pulse(grid_1d, 1, 0.2, 3 * grid_1d.dt)
    assert np.sum(pulse[1]) * grid_1d.dt == pytest.approx(1.0, rel=1e-12)
    assert not pulse[0].any()
    assert np.argmax(pulse[1]) == int(np.rint(0.2 / grid_1d.dt))


def test_mollify_keeps_the_mass_of_interior_impulses(grid_1d):
    impulse = np.zeros(grid_1d.signal_shape)
    impulse[0, 10] = 1.0
    smoothed = mollify(impulse)
    assert smoothed[0].sum() == pytest.approx(1.0)
    np.testing.assert_allclose(smoothed[0, 9:12], [0.25, 0.5, 0.25])


def test_smooth_bump(grid_1d):
    bump = smooth_bump(grid_1d, 0.2, 0.6, positions=[0], amplitude=2.0)
    assert not bump[1].any()
    assert bump[0].max() == pytest.approx(2.0, rel=1e-3)
    assert bump[0, grid_1d.times < 0.2].max() == 0.0
    with pytest.raises(GridValidationError):
        smooth_bump(grid_1d, 0.6, 0.2)


def test_smooth_random_signal_is_reproducible_and_supported(grid_1d):
    support = ProjectorSpec.full_boundary(grid_1d, grid_1d.horizon_T)
    first = smooth_random_signal(grid_1d, np.random.default_rng(7), 0.1, support=support, taper=0.05)
    second = smooth_random_signal(grid_1d, np.random.default_rng(7), 0.1, support=support, taper=0.05)
    np.testing.assert_array_equal(first, second)
    assert not first[:, grid_1d.n_half + 1 :].any()
    assert not first[:, 0].any()


def test_correlated_noise_has_unit_variance(grid_2d):
    """Away from the ends of the horizon the filtered noise keeps unit pointwise variance."""
    white = np.random.default_rng(11).standard_normal((64, *grid_2d.signal_shape))
    noise = correlate(grid_2d, white, correlation_time=0.05, correlation_length=0.1)
    assert np.var(noise[..., 10:-10]) == pytest.approx(1.0, rel=0.15)
