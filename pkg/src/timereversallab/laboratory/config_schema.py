"""Pydantic (configuration) schema of laboratory runs."""

import logging
from pathlib import Path
from typing import Annotated, Literal, Tuple, Type

from pydantic import (
    BaseModel,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    model_validator,
)
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

AvailableExperiments = Literal[
    "blago-check",
    "control",
    "focus",
    "distance",
    "arrival-map",
    "noise-avg",
]

AvailableOracles = Literal["ideal", "cached"]


class ConstantField(BaseModel):
    """Field with the same value on every node."""

    type: Literal["constant"] = "constant"
    value: float


class LinearGradientField(BaseModel):
    """Field base + gradient . x."""

    type: Literal["linear_gradient"] = "linear_gradient"
    base: float = 1.0
    gradient: Tuple[float, ...]


class SinusoidalField(BaseModel):
    """Field base + amplitude * sin(pi * frequency * x_axis)."""

    type: Literal["sinusoidal"] = "sinusoidal"
    base: float = 1.0
    amplitude: float
    frequency: float = 1.0
    axis: NonNegativeInt = 0


class GaussianLensField(BaseModel):
    """Field base - depth * exp(-|x - center|^2 / (2 width^2)); a positive depth gives a slow lens."""

    type: Literal["gaussian_lens"] = "gaussian_lens"
    base: float = 1.0
    depth: float
    center: Tuple[float, ...]
    width: PositiveFloat


class TableField(BaseModel):
    """Explicit values, one per node in flattened node order (or per boundary position for impedances)."""

    type: Literal["table"] = "table"
    values: list[float] = Field(min_length=1)


FieldConfig = Annotated[
    ConstantField | LinearGradientField | SinusoidalField | GaussianLensField | TableField,
    Field(discriminator="type"),
]


class MediumConfig(BaseModel):
    """Hidden medium, either a bundled preset or an explicit wave speed on an explicit domain."""

    preset: str | None = "1d-homogeneous"
    extents: Tuple[PositiveFloat, ...] | None = None
    wave_speed: FieldConfig | None = None
    potential: FieldConfig = ConstantField(value=0.0)
    impedance: FieldConfig = ConstantField(value=0.0)

    @model_validator(mode="after")
    def check_source(self) -> "MediumConfig":
        if self.wave_speed is not None and self.extents is None:
            raise ValueError("an explicit wave_speed needs the domain extents")
        if self.wave_speed is None and self.preset is None:
            raise ValueError("either a preset or an explicit wave_speed is required")
        return self


class GridConfig(BaseModel):
    """Lattice parameters; unset values fall back to the preset recommendations."""

    resolution: PositiveInt | None = None
    horizon_T: PositiveFloat | None = None


class IterationSettings(BaseModel):
    """Regularized control solver settings."""

    alpha: float = Field(default=1e-3, gt=0, lt=1)
    omega: PositiveFloat | Literal["auto"] = "auto"
    n_max: PositiveInt | None = None
    tol_fp: PositiveFloat = 1e-6
    solver: Literal["ptr", "cg"] = "ptr"
    # "auto" resolves the variant and sign from probe signals
    variant: Literal["auto", "intro", "section2"] = "auto"
    power_iterations: int = Field(default=16, ge=8)


class NoiseSettings(BaseModel):
    """Correlated Gaussian measurement noise."""

    sigma: NonNegativeFloat = 0.01
    correlation_time: PositiveFloat = 0.05
    correlation_length: PositiveFloat = 0.1


class WindowConfig(BaseModel):
    """One boundary patch x time window, Gamma x [T - length, T]."""

    patch: list[NonNegativeInt] = Field(min_length=1)
    length: NonNegativeFloat


class SmoothRandomSource(BaseModel):
    """Random smooth signal on the whole boundary."""

    type: Literal["smooth_random"] = "smooth_random"
    correlation_time: PositiveFloat = 0.1
    correlation_length: PositiveFloat | None = 0.2
    # vanishes at t = 0 over this duration
    taper: PositiveFloat | None = 0.05
    # restricts the support to [0, T]
    first_half: bool = True


class BumpSource(BaseModel):
    """sin^2 bump in time on selected boundary positions."""

    type: Literal["bump"] = "bump"
    t_start: NonNegativeFloat = 0.0
    t_end: PositiveFloat | None = None
    positions: list[NonNegativeInt] | None = None
    amplitude: float = 1.0


SourceConfig = Annotated[SmoothRandomSource | BumpSource, Field(discriminator="type")]


class ExperimentConfig(BaseModel):
    """Settings shared by all experiment kinds."""

    kind: AvailableExperiments
    oracle: AvailableOracles = "ideal"
    source: SourceConfig = SmoothRandomSource()


class BlagoCheckExperimentConfig(ExperimentConfig):
    """Compare boundary-data inner products with interior inner products."""

    kind: Literal["blago-check"] = "blago-check"
    pairs: PositiveInt = 8


class ControlExperimentConfig(ExperimentConfig):
    """Follow h(alpha) along an alpha schedule and measure the control error."""

    kind: Literal["control"] = "control"
    windows: list[WindowConfig] = Field(min_length=1)
    alpha_schedule: list[Annotated[float, Field(gt=0, lt=1)]] = [1e-1, 1e-2, 1e-3]


class FocusExperimentConfig(ExperimentConfig):
    """Build a focusing source and measure its concentration."""

    kind: Literal["focus"] = "focus"
    z_hat: NonNegativeInt = 0
    t_hat: PositiveFloat
    t0: NonNegativeFloat
    alpha_schedule: list[Annotated[float, Field(gt=0, lt=1)]] | None = None
    patch_radius: PositiveFloat | None = None
    j_max: NonNegativeInt = 4
    form: Literal["slab", "complement"] = "slab"
    probe: Literal["none", "analytic", "self-hosted"] = "none"

    @model_validator(mode="after")
    def check_times(self) -> "FocusExperimentConfig":
        if self.t0 > self.t_hat:
            raise ValueError("t0 must not exceed t_hat")
        return self


class DistanceExperimentConfig(ExperimentConfig):
    """Boundary distance function of a point on a normal geodesic."""

    kind: Literal["distance"] = "distance"
    z: NonNegativeInt = 0
    t1: PositiveFloat
    targets: list[NonNegativeInt] | None = None
    j: NonNegativeInt = 3
    epsilon: PositiveFloat | None = None
    patch_radius: PositiveFloat | None = None
    theta: PositiveFloat = 1e-3
    check_cut: bool = False


class ArrivalMapExperimentConfig(ExperimentConfig):
    """First-arrival travel times between boundary nodes and the boundary wave speed."""

    kind: Literal["arrival-map"] = "arrival-map"
    positions: list[NonNegativeInt] | None = None
    half_width: PositiveFloat | None = None


class NoiseAvgExperimentConfig(ExperimentConfig):
    """Averaging of noisy PTR iterates."""

    kind: Literal["noise-avg"] = "noise-avg"
    windows: list[WindowConfig] = Field(min_length=1)
    noise: NoiseSettings = NoiseSettings()
    k_values: list[PositiveInt] = [4, 8, 16, 32, 64, 128, 256]
    replicas: PositiveInt = 4
    warm_start: bool = True


AvailableExperimentConfigs = Annotated[
    BlagoCheckExperimentConfig
    | ControlExperimentConfig
    | FocusExperimentConfig
    | DistanceExperimentConfig
    | ArrivalMapExperimentConfig
    | NoiseAvgExperimentConfig,
    Field(discriminator="kind"),
]


class LaboratoryConfig(BaseSettings):
    """Top-level run configuration: medium, lattice, solver settings and one experiment."""

    experiment: AvailableExperimentConfigs

    model_config = SettingsConfigDict(toml_file="config/laboratory.toml", env_prefix="PTRLAB_")

    log_level: NonNegativeInt = logging.NOTSET
    medium: MediumConfig = MediumConfig()
    grid: GridConfig = GridConfig()
    iteration: IterationSettings = IterationSettings()
    seed: int | None = None
    output_directory: Path = Path("output")
    query_log: bool = False

    @model_validator(mode="after")
    def check_seed(self) -> "LaboratoryConfig":
        if self.experiment.kind == "noise-avg" and self.seed is None:
            raise ValueError("noise-avg experiments need an explicit seed")
        return self

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        """Init arguments first, then PTRLAB_ environment variables, then the TOML resource."""
        return (init_settings, env_settings, TomlConfigSettingsSource(settings_cls))
