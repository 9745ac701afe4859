"""Turn field and source configurations into node arrays and boundary signals."""

from typing import Callable

import numpy as np

from ..boundary_ops import ProjectorSpec, smooth_bump, smooth_random_signal
from ..exceptions import GridValidationError
from ..medium import DomainGrid
from .config_schema import (
    BumpSource,
    ConstantField,
    FieldConfig,
    GaussianLensField,
    LinearGradientField,
    SinusoidalField,
    SmoothRandomSource,
    SourceConfig,
    TableField,
)


def sample_field(config: FieldConfig, coordinates: np.ndarray) -> np.ndarray:
    """
    Evaluate a field configuration on a set of points.

    :param config: A field configuration
    :param coordinates: points of shape (n, m)
    :returns: one value per point
    """
    dimension = coordinates.shape[1]
    if isinstance(config, ConstantField):
        return np.full(len(coordinates), config.value)
    elif isinstance(config, LinearGradientField):
        if len(config.gradient) != dimension:
            raise GridValidationError(f"Gradient {config.gradient} does not match dimension {dimension}.")
        return config.base + coordinates @ np.asarray(config.gradient)
    elif isinstance(config, SinusoidalField):
        if config.axis >= dimension:
            raise GridValidationError(f"Axis {config.axis} does not exist in dimension {dimension}.")
        return config.base + config.amplitude * np.sin(np.pi * config.frequency * coordinates[:, config.axis])
    elif isinstance(config, GaussianLensField):
        if len(config.center) != dimension:
            raise GridValidationError(f"Lens centre {config.center} does not match dimension {dimension}.")
        radius2 = np.sum((coordinates - np.asarray(config.center)) ** 2, axis=1)
        return config.base - config.depth * np.exp(-radius2 / (2 * config.width**2))
    elif isinstance(config, TableField):
        values = np.asarray(config.values, dtype=float)
        if values.size != len(coordinates):
            raise GridValidationError(f"Table has {values.size} values, expected {len(coordinates)}.")
        return values
    raise GridValidationError(f"Unsupported field configuration {type(config).__name__}.")


def field_function(config: FieldConfig) -> Callable[[np.ndarray], np.ndarray]:
    """Callable form accepted by `build_grid` and `build_medium`."""
    return lambda coordinates: sample_field(config, coordinates)


def sample_source(grid: DomainGrid, config: SourceConfig, rng: np.random.Generator) -> np.ndarray:
    """
    Build the base source of an experiment.

    :param grid: the grid
    :param config: A source configuration
    :param rng: random generator of the run
    :returns: boundary signal
    """
    if isinstance(config, SmoothRandomSource):
        support = ProjectorSpec.full_boundary(grid, grid.horizon_T) if config.first_half else None
        # [T - T, T] is exactly the first half [0, T]
        return smooth_random_signal(
            grid,
            rng,
            correlation_time=config.correlation_time,
            correlation_length=config.correlation_length,
            support=support,
            taper=config.taper,
        )
    elif isinstance(config, BumpSource):
        t_end = grid.horizon_T if config.t_end is None else config.t_end
        return smooth_bump(grid, config.t_start, t_end, config.positions, config.amplitude)
    raise GridValidationError(f"Unsupported source configuration {type(config).__name__}.")
