"""Runs one configured experiment and writes its manifest and artifacts."""

import time
from pathlib import Path
from typing import Any

import numpy as np
import pydantic
import scipy
from pydantic import BaseModel

from .. import __version__
from ..boundary_ops import (
    FilterConvention,
    FilterVariant,
    ProjectorSpec,
    canonical_conventions,
    smooth_random_signal,
)
from ..field_io import QueryLog, save_operator
from ..logging_helper import get_logger, update_log_level
from ..measurement import IdealOracle, MeasurementOracle, assemble_cached, resolve_convention
from ..medium import DomainGrid, MediumSpec, build_grid, build_medium
from ..ptr import IterationConfig
from ..validation import ValidationSolver
from .base_experiment import ExperimentContext
from .config_schema import LaboratoryConfig
from .experiment_class_lookup import get_experiment_class
from .field_sampler import field_function
from .media_presets import get_media_preset

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.json"
CONVENTION_PROBES = 3
DEFAULT_RESOLUTION = 64
DEFAULT_HORIZON = 1.2


class RunManifest(BaseModel):
    """Record of one run; it embeds the resolved configuration so the run can be repeated from it."""

    versions: dict[str, str]
    experiment: str
    configuration: dict[str, Any]
    convention: dict[str, Any]
    grid: dict[str, Any]
    query_count: int
    solves: list[dict[str, Any]]
    metrics: dict[str, Any]
    outputs: list[str]
    wall_time: float


def _builtin(value: Any) -> Any:
    """Replace numpy scalars and arrays by plain Python values."""
    if isinstance(value, dict):
        return {key: _builtin(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_builtin(item) for item in value]
    if isinstance(value, np.ndarray):
        return _builtin(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


class ExperimentManager:
    """Builds grid, medium and oracle from the configuration and runs the configured experiment."""

    config: LaboratoryConfig
    grid: DomainGrid
    medium: MediumSpec

    def __init__(self, config: LaboratoryConfig):
        """
        Sample the medium on its lattice.

        :param config: resolved laboratory configuration
        """
        global logger
        logger = update_log_level(logger)
        self.config = config
        self.grid, self.medium = self.build_medium()

    @property
    def seed(self) -> int:
        return 0 if self.config.seed is None else self.config.seed

    @property
    def output_directory(self) -> Path:
        return Path(self.config.output_directory)

    def build_medium(self) -> tuple[DomainGrid, MediumSpec]:
        """Build the lattice and sample the hidden medium, falling back to the preset recommendations."""
        medium_config = self.config.medium
        if medium_config.wave_speed is not None:
            extents = medium_config.extents
            wave_speed = field_function(medium_config.wave_speed)
            resolution, horizon = DEFAULT_RESOLUTION, DEFAULT_HORIZON
        else:
            preset = get_media_preset(medium_config.preset)
            extents = medium_config.extents or preset.extents
            wave_speed = field_function(preset.wave_speed)
            resolution, horizon = preset.default_resolution, preset.recommended_T
        resolution = self.config.grid.resolution or resolution
        horizon = self.config.grid.horizon_T or horizon

        grid = build_grid(extents, resolution, horizon, wave_speed)
        medium = build_medium(
            grid,
            wave_speed,
            potential=field_function(medium_config.potential),
            impedance=field_function(medium_config.impedance),
        )
        logger.info(f"Medium on grid {grid.shape}: c in [{medium.c_min:.3f}, {medium.c_max:.3f}], T={grid.horizon_T}")
        return grid, medium

    def build_oracle(self, query_log: QueryLog | None, outputs: list[str]) -> MeasurementOracle:
        """The measurement oracle of the configured flavor; cached operators are stored with the artifacts."""
        ideal = IdealOracle(self.grid, self.medium)
        if self.config.experiment.oracle == "ideal":
            ideal.query_log = query_log
            return ideal
        cached = assemble_cached(ideal)
        cached.query_log = query_log
        path = save_operator(self.output_directory / "response_operator.ptrk", cached.matrix, self.grid)
        outputs.append(str(path.relative_to(self.output_directory)))
        return cached

    def resolve_convention(self, oracle: MeasurementOracle, validator: ValidationSolver) -> dict[str, Any]:
        """Freeze the filter convention, either as configured or from probe signals."""
        variant = self.config.iteration.variant
        if variant != "auto":
            convention = canonical_conventions[FilterVariant(variant)]
            return {"variant": convention.variant.value, "sign": convention.sign, "resolved": False}
        rng = np.random.default_rng([self.seed, 1])
        first_half = ProjectorSpec.full_boundary(self.grid, self.grid.horizon_T)
        probes = [
            smooth_random_signal(
                self.grid, rng, correlation_time=0.1, correlation_length=0.2, support=first_half, taper=0.05
            )
            for _ in range(CONVENTION_PROBES)
        ]
        resolution = resolve_convention(oracle, probes, volume_gram=validator.gram)
        return {**resolution.as_dict(), "resolved": True}

    def run(self) -> RunManifest:
        """
        Run the configured experiment.

        :returns: the manifest, which is also written to the output directory
        """
        started = time.perf_counter()
        self.output_directory.mkdir(parents=True, exist_ok=True)
        outputs: list[str] = list()
        query_log = QueryLog() if self.config.query_log else None

        oracle = self.build_oracle(query_log, outputs)
        validator = ValidationSolver(self.grid, self.medium)
        convention_record = self.resolve_convention(oracle, validator)
        convention = FilterConvention(FilterVariant(convention_record["variant"]), convention_record["sign"])

        settings = self.config.iteration
        iteration = IterationConfig(
            alpha=settings.alpha,
            omega=settings.omega,
            n_max=settings.n_max,
            tol_fp=settings.tol_fp,
            convention=convention,
            solver=settings.solver,
            power_iterations=settings.power_iterations,
            seed=self.seed,
        )
        context = ExperimentContext(
            grid=self.grid,
            medium=self.medium,
            oracle=oracle,
            validator=validator,
            convention=convention,
            iteration=iteration,
            seed=self.seed,
            output_directory=self.output_directory,
            outputs=outputs,
        )

        kind = self.config.experiment.kind
        logger.info(f"Starting {kind} experiment with filter convention {convention}")
        experiment = get_experiment_class(kind)(experiment_config=self.config.experiment, context=context)
        experiment.run()

        if query_log is not None:
            path = query_log.write_csv(self.output_directory / "query_log.csv", {"flavor": oracle.flavor})
            outputs.append(str(path.relative_to(self.output_directory)))

        manifest = RunManifest(
            versions={
                "timereversallab": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pydantic": pydantic.VERSION,
            },
            experiment=kind,
            configuration=self.config.model_dump(mode="json"),
            convention=_builtin(convention_record),
            grid={
                "dimension": self.grid.dimension,
                "shape": list(self.grid.shape),
                "h": self.grid.h,
                "dt": self.grid.dt,
                "T": self.grid.horizon_T,
            },
            query_count=oracle.query_count,
            solves=_builtin(context.solves),
            metrics=_builtin(context.metrics),
            outputs=outputs + [MANIFEST_NAME],
            wall_time=time.perf_counter() - started,
        )
        (self.output_directory / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2))
        logger.info(f"Finished {kind} experiment, {len(manifest.outputs)} artifacts in {self.output_directory}")
        return manifest
