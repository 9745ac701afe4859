"""Tests for travel-time distances recovered from boundary data."""

import numpy as np
import pytest
from scipy.integrate import quad

from timereversallab.boundary_ops import smooth_bump
from timereversallab.distance import (
    BoundaryDistanceFunction,
    ConditionTester,
    DistanceQuery,
    arrival_time_map,
    boundary_distance,
    boundary_distance_function,
    boundary_wavespeed,
    chi_algebra_residual,
    condition_test,
)
from timereversallab.exceptions import GridValidationError
from timereversallab.measurement import IdealOracle, assemble_cached
from timereversallab.medium import build_grid, build_medium, normal_geodesic_point, travel_time_distance
from timereversallab.ptr import IterationConfig

CG_CONFIG = IterationConfig(alpha=1e-4, solver="cg", tol_fp=1e-10)


def sinusoidal_speed(coordinates):
    return 1.0 + 0.3 * np.sin(np.pi * coordinates[:, 0])


def gradient_speed(coordinates):
    return 1.0 + 0.3 * coordinates[:, 0]


@pytest.fixture(scope="module")
def bump_source(long_grid_1d):
    """Both end points emit a sin^2 bump over [0, T], so u^f(T) is positive on the whole interval."""
    return smooth_bump(long_grid_1d, 0.0, long_grid_1d.horizon_T)


@pytest.fixture(scope="module")
def sinusoidal_lattice():
    """Unit interval with c = 1 + 0.3 sin(pi x), 128 nodes, T = 0.9."""
    grid = build_grid(1.0, 128, 0.9, sinusoidal_speed)
    medium = build_medium(grid, sinusoidal_speed)
    return grid, medium, assemble_cached(IdealOracle(grid, medium))


# ============================================================================
# Query geometry
# ============================================================================


def test_query_validation(long_grid_1d):
    with pytest.raises(GridValidationError):
        DistanceQuery(z=0, y=1, t1=0.0, config=CG_CONFIG)
    with pytest.raises(GridValidationError):
        DistanceQuery(z=0, y=1, t1=0.3, config=CG_CONFIG, theta=0.0)
    with pytest.raises(GridValidationError):
        DistanceQuery(z=0, y=5, t1=0.3, config=CG_CONFIG).validate(long_grid_1d)
    with pytest.raises(GridValidationError):
        DistanceQuery(z=0, y=1, t1=0.01, config=CG_CONFIG).validate(long_grid_1d)
    with pytest.raises(GridValidationError):
        DistanceQuery(z=0, y=1, t1=2.0, config=CG_CONFIG).validate(long_grid_1d)


def test_projectors_share_the_background(long_grid_1d):
    query = DistanceQuery(z=0, y=1, t1=0.3, config=CG_CONFIG)
    assert query.eps(long_grid_1d) == pytest.approx(2 * long_grid_1d.h)
    b1, b2, b3, b4 = query.projectors(long_grid_1d, 0.8)
    assert b4 == query.projectors(long_grid_1d, 0.6)[3]
    assert b1 == query.projectors(long_grid_1d, 0.6)[0]
    np.testing.assert_array_equal(b3.mask(long_grid_1d), b1.mask(long_grid_1d) | b2.mask(long_grid_1d))
    assert query.retarget(0).y == 0


@pytest.mark.parametrize("tau", [0.0, 0.35, 0.7, 1.2])
def test_indicator_algebra_is_exact(long_grid_1d, long_medium_1d, grid_2d, medium_2d, tau):
    """chi_N1 + chi_N2 - chi_N3 - chi_N4 is the indicator of the test set."""
    query = DistanceQuery(z=0, y=1, t1=0.3, config=CG_CONFIG)
    assert chi_algebra_residual(long_grid_1d, long_medium_1d, query, tau) == 0
    square = DistanceQuery(z=12, y=40, t1=0.3, config=CG_CONFIG, j=2)
    assert chi_algebra_residual(grid_2d, medium_2d, square, min(tau, 0.6)) == 0


def test_zero_source_never_satisfies_the_condition(long_grid_1d, long_cached_1d):
    query = DistanceQuery(z=0, y=1, t1=0.3, config=CG_CONFIG)
    holds, value = condition_test(long_cached_1d, np.zeros(long_grid_1d.signal_shape), query, 0.8)
    assert not holds and value == 0.0


def test_search_time_outside_the_horizon(long_cached_1d, bump_source):
    tester = ConditionTester(long_cached_1d, bump_source, DistanceQuery(z=0, y=1, t1=0.3, config=CG_CONFIG))
    with pytest.raises(GridValidationError):
        tester.test(2.0)


# ============================================================================
# Distances
# ============================================================================


@pytest.mark.slow
def test_condition_brackets_the_distance(long_grid_1d, long_cached_1d, bump_source):
    """For x = 0.3 and y = 1 the distance is 0.7."""
    tester = ConditionTester(long_cached_1d, bump_source, DistanceQuery(z=0, y=1, t1=0.3, config=CG_CONFIG))
    assert tester.test(0.8).holds
    assert not tester.test(0.6).holds
    assert tester.monotone
    assert [row[0] for row in tester.trace_rows()] == [0.8, 0.6]


@pytest.mark.slow
def test_bisection_recovers_the_distance(long_grid_1d, long_cached_1d, bump_source):
    query = DistanceQuery(z=0, y=1, t1=0.3, config=CG_CONFIG)
    cache = {}
    tester = ConditionTester(long_cached_1d, bump_source, query, cache)
    estimate = boundary_distance(long_cached_1d, bump_source, query, tester)
    assert estimate.status == "converged"
    assert estimate.monotone
    lo, hi = estimate.bracket
    assert hi - lo <= 2 * long_grid_1d.dt
    tolerance = max(4 * long_grid_1d.dt, 2 * long_grid_1d.h)
    assert estimate.value == pytest.approx(0.7, abs=tolerance)
    # the tau independent solves for B1 and B4 are computed once
    b1, _, _, b4 = query.projectors(long_grid_1d, 0.5)
    assert b1 in cache and b4 in cache


@pytest.mark.slow
@pytest.mark.parametrize("z, y, t1", [(0, 1, 0.2), (0, 1, 0.3), (0, 1, 0.35), (1, 0, 0.2), (1, 0, 0.3)])
def test_bisection_in_the_sinusoidal_medium(sinusoidal_lattice, z, y, t1):
    """d(gamma_z(T1), y) agrees with the travel time computed from the medium within two cells."""
    grid, medium, cached = sinusoidal_lattice
    x = normal_geodesic_point(grid, medium, z, t1)
    assert x.minimizing
    reference = travel_time_distance(grid, medium, [grid.boundary_nodes[y]]).at(grid, x.point)
    f = smooth_bump(grid, 0.0, grid.horizon_T)
    estimate = boundary_distance(cached, f, DistanceQuery(z=z, y=y, t1=t1, config=CG_CONFIG))
    assert estimate.status == "converged"
    tolerance = 2 * grid.h / medium.c_min + grid.dt
    assert estimate.value == pytest.approx(reference, abs=tolerance)


@pytest.mark.slow
def test_boundary_distance_function_on_the_interval(long_grid_1d, long_cached_1d, bump_source):
    """From x = 0.3 the boundary distance function is (0.3, 0.7)."""
    template = DistanceQuery(z=0, y=0, t1=0.3, config=CG_CONFIG)
    sampled = boundary_distance_function(long_cached_1d, bump_source, template, [0, 1])
    assert sampled.statuses == ["converged", "converged"]
    assert sampled.beyond_cut is None
    # the target at z itself is shifted by up to one eps
    tolerance = max(4 * long_grid_1d.dt, 2 * long_grid_1d.h) + template.eps(long_grid_1d)
    np.testing.assert_allclose(sampled.values, [0.3, 0.7], atol=tolerance)
    assert sampled.lipschitz_excess(np.array([[0.0, 1.0], [1.0, 0.0]])) <= tolerance


def test_lipschitz_excess_of_a_sampled_function():
    sampled = BoundaryDistanceFunction(
        z=0, t1=0.3, positions=[0, 1], values=np.array([0.3, 0.7]), statuses=["converged", "converged"]
    )
    metric = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert sampled.lipschitz_excess(metric) == pytest.approx(0.0)
    assert sampled.rows() == [[0, 0.3, "converged"], [1, 0.7, "converged"]]


# ============================================================================
# Arrival times
# ============================================================================


def test_arrival_time_across_the_interval(long_grid_1d, long_cached_1d):
    arrivals = arrival_time_map(long_cached_1d)
    assert arrivals.times[0, 0] == 0.0 and arrivals.times[1, 1] == 0.0
    assert arrivals.times[0, 1] == pytest.approx(1.0, abs=3 * long_grid_1d.dt)
    np.testing.assert_allclose(arrivals.times, arrivals.times.T)
    assert not arrivals.flagged.any()
    assert arrivals.asymmetry < long_grid_1d.dt


def test_wavespeed_of_the_fast_interval():
    wave_speed = 2.0
    grid = build_grid(1.0, 128, 0.75, wave_speed)
    oracle = IdealOracle(grid, build_medium(grid, wave_speed))
    speeds = boundary_wavespeed(arrival_time_map(oracle), grid)
    assert oracle.query_count == 2
    np.testing.assert_allclose(speeds, wave_speed, rtol=0.05)


def test_wavespeed_of_an_interval_is_the_harmonic_mean(sinusoidal_lattice):
    """Both end points report L / d(0, L), not the local speed c = 1 found there."""
    grid, _, cached = sinusoidal_lattice
    slowness, _ = quad(lambda x: 1.0 / (1.0 + 0.3 * np.sin(np.pi * x)), 0.0, 1.0)
    speeds = boundary_wavespeed(arrival_time_map(cached), grid)
    np.testing.assert_allclose(speeds, 1.0 / slowness, rtol=0.05)
    assert speeds[0] == speeds[1]
    assert speeds[0] > 1.1


def test_arrival_map_on_the_square(grid_2d, medium_2d):
    """On the unit square with c = 1 the boundary speed is recovered within 5% at every boundary node."""
    oracle = IdealOracle(grid_2d, medium_2d)
    arrivals = arrival_time_map(oracle)
    assert arrivals.times.shape == (grid_2d.n_boundary, grid_2d.n_boundary)
    assert np.all(np.diag(arrivals.times) == 0.0)
    adjacent_corners = grid_2d.boundary_position(grid_2d.nearest_node([1.0, 0.0]))
    assert arrivals.times[0, adjacent_corners] == pytest.approx(1.0, rel=0.05)
    speeds = boundary_wavespeed(arrivals, grid_2d)
    assert speeds.shape == (grid_2d.n_boundary,)
    np.testing.assert_allclose(speeds, 1.0, rtol=0.05)
    with pytest.raises(GridValidationError):
        boundary_wavespeed(arrival_time_map(oracle, positions=[0, 1, 2]), grid_2d)


def test_wavespeed_in_the_gradient_medium():
    """c = 1 + 0.3 x1 is recovered within 10% on the boundary away from the corners."""
    grid = build_grid((1.0, 1.0), 24, 0.6, gradient_speed)
    oracle = IdealOracle(grid, build_medium(grid, gradient_speed))
    speeds = boundary_wavespeed(arrival_time_map(oracle), grid)
    truth = gradient_speed(grid.boundary_coordinates)
    corners = np.arange(4) * (grid.shape[0] - 1)
    loop = np.arange(grid.n_boundary)
    separation = np.abs(loop[:, None] - corners[None, :])
    away = np.min(np.minimum(separation, grid.n_boundary - separation), axis=1) > 5
    assert away.sum() > grid.n_boundary / 2
    np.testing.assert_allclose(speeds[away], truth[away], rtol=0.10)
