"""Base experiment class from which the individual experiment kinds are derived."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..boundary_ops import FilterConvention, ProjectorSpec
from ..field_io import write_csv_table, write_field_csv, write_signal_csv
from ..measurement import MeasurementOracle
from ..medium import DomainGrid, MediumSpec
from ..ptr import IterationConfig, IterationResult
from ..validation import ValidationSolver
from .config_schema import ExperimentConfig, WindowConfig


@dataclass(eq=False)
class ExperimentContext:
    """Everything an experiment may use, plus the bookkeeping of what it produced."""

    grid: DomainGrid
    medium: MediumSpec
    oracle: MeasurementOracle
    validator: ValidationSolver
    convention: FilterConvention
    iteration: IterationConfig
    seed: int
    output_directory: Path
    outputs: list[str] = field(default_factory=list)
    metrics: dict[str, Any] = field(default_factory=dict)
    solves: list[dict[str, Any]] = field(default_factory=list)

    @property
    def rng(self) -> np.random.Generator:
        """A fresh generator of the run seed, so the draw order does not depend on earlier experiments."""
        return np.random.default_rng(self.seed)

    def _declare(self, path: Path) -> Path:
        self.outputs.append(str(path.relative_to(self.output_directory)))
        return path

    def write_table(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]], **metadata) -> Path:
        return self._declare(write_csv_table(self.output_directory / name, header, rows, metadata))

    def write_field(self, name: str, values: np.ndarray, time: float | None = None, **metadata) -> Path:
        return self._declare(write_field_csv(self.output_directory / name, self.grid, values, time, **metadata))

    def write_signal(self, name: str, signal: np.ndarray, **metadata) -> Path:
        return self._declare(write_signal_csv(self.output_directory / name, self.grid, signal, **metadata))

    def record_solve(self, name: str, result: IterationResult, **extra):
        """Keep the convergence record of one control solve for the manifest."""
        self.solves.append(
            {
                "name": name,
                "solver": result.solver,
                "steps": result.steps,
                "omega": result.omega,
                "converged": result.converged,
                "residual": result.residual,
                "queries": result.query_count,
                "history": result.increments,
                **extra,
            }
        )


class Experiment:
    """Base class of experiments; subclasses implement `run`."""

    experiment_config: ExperimentConfig
    context: ExperimentContext

    def __init__(self, experiment_config: ExperimentConfig, context: ExperimentContext):
        """
        Bind the experiment to its configuration and the shared run context.

        :param experiment_config: experiment specific configuration
        :param context: grid, medium, oracle and output bookkeeping of the run
        """
        self.experiment_config = experiment_config
        self.context = context

    def projector(self, windows: list[WindowConfig]) -> ProjectorSpec:
        """The set B of a list of configured windows."""
        projector = ProjectorSpec.from_windows([(w.patch, w.length) for w in windows])
        projector.mask(self.context.grid)
        return projector

    def run(self):
        """Run the experiment, writing its artifacts through the context."""
        raise NotImplementedError
