"""Tests for the grid, the medium and the travel-time geometry."""

import numpy as np
import pytest
from scipy.integrate import quad

from timereversallab.exceptions import EmptySlabError, GeodesicExitError, GridValidationError
from timereversallab.medium import (
    CFL_FACTOR,
    build_grid,
    build_medium,
    c0_constant,
    domain_of_influence,
    inward_normal,
    normal_geodesic_point,
    slab_volume,
    travel_time_distance,
)


GRADIENT = 0.3


def sinusoidal_speed(coordinates):
    return 1.0 + 0.3 * np.sin(np.pi * coordinates[:, 0])


def gradient_speed(coordinates):
    return 1.0 + GRADIENT * coordinates[:, 0]


# ============================================================================
# Lattice construction
# ============================================================================


def test_time_step_respects_cfl_and_divides_horizon(grid_1d, grid_2d):
    """dt stays below the CFL bound and T is an integer multiple of dt."""
    assert grid_1d.dt <= CFL_FACTOR * grid_1d.h + 1e-15
    assert grid_2d.dt <= CFL_FACTOR * grid_2d.h / np.sqrt(2) + 1e-15
    for grid, horizon in ((grid_1d, 1.0), (grid_2d, 0.6)):
        assert grid.n_half * grid.dt == pytest.approx(horizon, rel=1e-12)
        assert grid.n_samples == 2 * grid.n_half + 1


def test_boundary_layout(grid_1d, grid_2d):
    """The interval has two end points, the square boundary runs once around its 4(n-1) nodes."""
    assert grid_1d.n_boundary == 2
    np.testing.assert_allclose(grid_1d.surface_weights, 1.0)
    assert grid_2d.n_boundary == 4 * 23
    assert len(set(grid_2d.boundary_nodes.tolist())) == grid_2d.n_boundary
    assert grid_2d.boundary_length == pytest.approx(4.0, rel=1e-12)
    np.testing.assert_allclose(grid_2d.boundary_coordinates[0], [0.0, 0.0])
    assert len(grid_2d.interior_nodes) == 22 * 22
    assert grid_2d.boundary_position(int(grid_2d.boundary_nodes[5])) == 5
    with pytest.raises(GridValidationError):
        grid_2d.boundary_position(int(grid_2d.interior_nodes[0]))


@pytest.mark.parametrize(
    "extents, resolution, horizon",
    [
        (1.0, 8, 1.0),
        (1.0, 64, -1.0),
        ((1.0, 2.0), 16, 1.0),
        ((1.0, 1.0, 1.0), 16, 1.0),
    ],
)
def test_invalid_lattices_are_rejected(extents, resolution, horizon):
    with pytest.raises(GridValidationError):
        build_grid(extents, resolution, horizon)


def test_medium_must_match_grid_wave_speed(grid_1d):
    """The grid fixes dt and dS_g from the wave speed it was built with."""
    with pytest.raises(GridValidationError):
        build_medium(grid_1d, 2.0)


def test_non_positive_wave_speed_is_rejected():
    with pytest.raises(GridValidationError):
        build_grid(1.0, 32, 1.0, lambda x: x[:, 0] - 0.5)


# ============================================================================
# Travel times
# ============================================================================


def test_interval_distance_is_arclength(grid_1d, medium_1d):
    distance = travel_time_distance(grid_1d, medium_1d, [0])
    np.testing.assert_allclose(distance.values, grid_1d.coordinates[:, 0], atol=1e-12)


def test_interval_distance_integrates_slowness():
    """d(0, 1) = int 1/c dx for a varying speed."""
    grid = build_grid(1.0, 128, 1.4, sinusoidal_speed)
    medium = build_medium(grid, sinusoidal_speed)
    expected, _ = quad(lambda x: 1.0 / (1.0 + 0.3 * np.sin(np.pi * x)), 0.0, 1.0)
    distance = travel_time_distance(grid, medium, [0])
    assert distance.values[-1] == pytest.approx(expected, abs=1e-4)


def test_fast_marching_on_homogeneous_square(grid_2d, medium_2d):
    """For constant speed the travel time is the Euclidean distance within two cells at every node."""
    for sources in ([0], [12], grid_2d.boundary_nodes):
        distance = travel_time_distance(grid_2d, medium_2d, sources)
        separation = grid_2d.coordinates[:, None, :] - grid_2d.coordinates[None, distance.sources, :]
        euclidean = np.min(np.linalg.norm(separation, axis=2), axis=1)
        np.testing.assert_allclose(distance.values, euclidean, atol=2 * grid_2d.h)
    corner = travel_time_distance(grid_2d, medium_2d, [0])
    assert corner.values[0] == 0.0
    assert corner.at(grid_2d, [1.0, 1.0]) == pytest.approx(np.sqrt(2.0), rel=0.05)


def test_fast_marching_in_the_gradient_medium():
    """Along x1 the travel time from the left edge is log(1 + a x1) / a."""
    grid = build_grid((1.0, 1.0), 24, 0.6, gradient_speed)
    medium = build_medium(grid, gradient_speed)
    left_edge = np.flatnonzero(np.isclose(grid.coordinates[:, 0], 0.0))
    distance = travel_time_distance(grid, medium, left_edge)
    expected = np.log1p(GRADIENT * grid.coordinates[:, 0]) / GRADIENT
    np.testing.assert_allclose(distance.values, expected, atol=2 * grid.h / medium.c_min)


def test_empty_source_set_is_rejected(grid_1d, medium_1d):
    with pytest.raises(GridValidationError):
        travel_time_distance(grid_1d, medium_1d, np.zeros(grid_1d.n_nodes, dtype=bool))


def test_domain_of_influence_on_interval(grid_1d, medium_1d):
    inside = domain_of_influence(grid_1d, medium_1d, [0], 0.4)
    np.testing.assert_array_equal(inside, grid_1d.coordinates[:, 0] <= 0.4)
    assert not domain_of_influence(grid_1d, medium_1d, [], 0.4).any()


# ============================================================================
# Normal geodesics
# ============================================================================


def test_corner_normal_is_bisector(grid_2d):
    np.testing.assert_allclose(inward_normal(grid_2d, 0), [np.sqrt(0.5), np.sqrt(0.5)])


def test_interval_geodesics(grid_1d, medium_1d):
    """The geodesic from either end point runs along the interval."""
    left = normal_geodesic_point(grid_1d, medium_1d, 0, 0.3)
    right = normal_geodesic_point(grid_1d, medium_1d, 1, 0.3)
    assert left.point[0] == pytest.approx(0.3, abs=1e-12)
    assert right.point[0] == pytest.approx(0.7, abs=1e-12)
    assert left.minimizing and right.minimizing
    assert not normal_geodesic_point(grid_1d, medium_1d, 0, 0.8).minimizing


def test_square_geodesic_cut_value(grid_2d, medium_2d):
    """From the middle of the bottom edge the geodesic stops minimizing once the top edge is closer."""
    z = 12
    np.testing.assert_allclose(grid_2d.boundary_coordinates[z], [12 * grid_2d.h, 0.0])
    near = normal_geodesic_point(grid_2d, medium_2d, z, 0.3)
    np.testing.assert_allclose(near.point, [12 * grid_2d.h, 0.3], atol=1e-12)
    assert near.minimizing
    assert not normal_geodesic_point(grid_2d, medium_2d, z, 0.7).minimizing
    with pytest.raises(GeodesicExitError):
        normal_geodesic_point(grid_2d, medium_2d, z, 1.2)


def test_curved_geodesic_in_the_gradient_medium():
    """
    In c = 1 + a x1 a ray leaving the bottom edge vertically follows a circle centred on the line x1 = -1/a.

    With R = x0 + 1/a the point at travel time s is (R sech(a s) - 1/a, R tanh(a s)).
    """
    grid = build_grid((1.0, 1.0), 24, 0.6, gradient_speed)
    medium = build_medium(grid, gradient_speed)
    z, s = 12, 0.3
    x0 = grid.boundary_coordinates[z][0]
    radius = x0 + 1.0 / GRADIENT
    expected = [radius / np.cosh(GRADIENT * s) - 1.0 / GRADIENT, radius * np.tanh(GRADIENT * s)]
    geodesic = normal_geodesic_point(grid, medium, z, s)
    np.testing.assert_allclose(geodesic.point, expected, atol=1e-3)
    assert geodesic.point[0] < x0
    assert geodesic.minimizing


# ============================================================================
# Slabs
# ============================================================================


def test_slab_volume_on_interval(long_grid_1d, long_medium_1d):
    volume = slab_volume(long_grid_1d, long_medium_1d, 0, 0.5, 0.45)
    assert volume == pytest.approx(0.05, abs=2 * long_grid_1d.h)
    assert slab_volume(long_grid_1d, long_medium_1d, 0, 0.5, 0.5) == 0.0


def test_slab_constant_on_interval(long_grid_1d, long_medium_1d):
    """In 1D with c = 1 the slab volume equals its thickness, so C0 = 1."""
    estimate = c0_constant(long_grid_1d, long_medium_1d, 0, 0.4)
    assert estimate.value == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(estimate.ratios, 1.0, atol=1e-6)


def test_slab_beyond_cut_value_is_empty(long_grid_1d, long_medium_1d):
    with pytest.raises(EmptySlabError):
        c0_constant(long_grid_1d, long_medium_1d, 0, 0.8)
