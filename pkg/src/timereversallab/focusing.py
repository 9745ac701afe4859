"""
Focusing sources and point values of waves.

A focusing source is built from two regularized control problems on the sets B = (Gamma x [T - T_hat, T]) union
(dM x [T - T0, T]) and B' = dM x [T - T0, T]. The difference h(alpha; B) - h(alpha; B') produces at time T the part of
u^f(T) inside the slab M(Gamma, T_hat) minus M(dM, T0); as Gamma shrinks to z_hat and T0 grows to T_hat, the slab
collapses onto x_hat, the end point of the normal geodesic of length T_hat from z_hat.
"""

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .boundary_ops import ProjectorSpec, boundary_patch, unit_area_pulse
from .exceptions import GridValidationError, NumericalFailure
from .logging_helper import get_logger
from .measurement import MeasurementOracle, blago_inner_product
from .medium import DomainGrid, MediumSpec, boundary_distance_field, normal_geodesic_point, travel_time_distance
from .ptr import IterationConfig, control_limit
from .validation import ValidationSolver

logger = get_logger(__name__)

AvailableForms = Literal["slab", "complement"]

CONCENTRATION_RADII = (2, 4, 8)
DEFAULT_THICKNESSES = (8, 4, 2)
UNRELIABLE_SPREAD = 0.5
CUT_MASS_RATIO = 0.1


@dataclass
class FocusSpec:
    """Focusing node, times and schedules of one focusing experiment."""

    z_hat: int
    t_hat: float
    t0: float
    config: IterationConfig
    alpha_schedule: Sequence[float] = ()
    patch_radius: float | None = None
    j_max: int = 4
    form: AvailableForms = "slab"

    def __post_init__(self):
        if not 0 <= self.t0 <= self.t_hat:
            raise GridValidationError(f"Focusing needs 0 <= T0 <= T_hat, got T0={self.t0}, T_hat={self.t_hat}.")
        if self.j_max < 0:
            raise GridValidationError(f"j_max must be non-negative, got {self.j_max}.")
        if self.form not in ("slab", "complement"):
            raise GridValidationError(f"Unknown focusing form {self.form}.")
        if not self.alpha_schedule:
            self.alpha_schedule = (self.config.alpha,)

    def validate(self, grid: DomainGrid):
        if not 0 <= self.z_hat < grid.n_boundary:
            raise GridValidationError(f"Focusing node {self.z_hat} is not a boundary position.")
        if self.t_hat > grid.horizon_T * (1 + 1e-9):
            raise GridValidationError(f"T_hat={self.t_hat} exceeds the horizon T={grid.horizon_T}.")

    @property
    def thickness(self) -> float:
        return self.t_hat - self.t0

    def patch(self, grid: DomainGrid, j: int | None = None) -> tuple[int, ...]:
        """Gamma_j, the boundary positions within r0 2^-j of z_hat."""
        j = self.j_max if j is None else j
        radius = grid.boundary_length / 8 if self.patch_radius is None else self.patch_radius
        return boundary_patch(grid, self.z_hat, radius * 2.0**-j)

    def projectors(self, grid: DomainGrid, j: int | None = None) -> tuple[ProjectorSpec, ProjectorSpec]:
        """The pair (B, B')."""
        background = ProjectorSpec.full_boundary(grid, self.t0)
        return ProjectorSpec.from_windows([(self.patch(grid, j), self.t_hat)]).union(background), background

    def with_t0(self, t0: float) -> "FocusSpec":
        return FocusSpec(
            self.z_hat, self.t_hat, t0, self.config, self.alpha_schedule, self.patch_radius, self.j_max, self.form
        )


@dataclass(eq=False)
class FocusingSource:
    """The combined source and the query cost of its two control solves."""

    signal: np.ndarray
    query_count: int
    converged: bool


def focusing_source(oracle: MeasurementOracle, f: np.ndarray, spec: FocusSpec, j: int | None = None) -> FocusingSource:
    """
    Build the focusing source for a base source f.

    The "slab" form returns h(alpha; B) - h(alpha; B'); the "complement" form returns f - h(alpha; B) + h(alpha; B'),
    whose wave at time T is the part of u^f(T) outside the slab.

    :param oracle: measurement oracle
    :param f: base source on [0, 2T]
    :param spec: focusing setup
    :param j: patch level, the finest by default
    :returns: focusing source
    """
    grid = oracle.grid
    spec.validate(grid)
    f = np.asarray(f, dtype=float)
    if not f.any():
        return FocusingSource(np.zeros(grid.signal_shape), 0, True)
    projector, background = spec.projectors(grid, j)
    first = oracle.query_count
    paths = [control_limit(oracle, f, p, spec.alpha_schedule, spec.config) for p in (projector, background)]
    converged = all(entry.result.converged for path in paths for entry in path.entries)
    restricted = paths[0].final() - paths[1].final()
    signal = restricted if spec.form == "slab" else f - restricted
    return FocusingSource(signal, oracle.query_count - first, converged)


@dataclass
class ConcentrationReport:
    """How much of the focused wave sits near x_hat."""

    x_hat: np.ndarray
    minimizing: bool
    normalization: float
    normalized_norm: float
    radius_fractions: dict[float, float] = field(default_factory=dict)
    slab_fraction: float = 0.0

    def rows(self) -> list[list]:
        return [[radius, fraction] for radius, fraction in self.radius_fractions.items()] + [
            ["slab", self.slab_fraction]
        ]


@dataclass(eq=False)
class FocusingProfile:
    field: np.ndarray
    report: ConcentrationReport


def focusing_profile(validator: ValidationSolver, h_tilde: np.ndarray, spec: FocusSpec) -> FocusingProfile:
    """
    Evaluate (T_hat - T0)^(-(m+1)/2) u^h(T) and measure its concentration around x_hat.

    Mass fractions are squared L2(dV) masses inside travel-time balls around x_hat of radius 2h, 4h and 8h (in units of
    the local travel time per cell) and inside the slab widened by one cell.

    :param validator: interior solver
    :param h_tilde: focusing source
    :param spec: focusing setup
    :returns: normalized field and concentration report
    """
    grid, medium = validator.grid, validator.medium
    x_hat = normal_geodesic_point(grid, medium, spec.z_hat, spec.t_hat)
    if not x_hat.minimizing:
        logger.warning(f"T_hat={spec.t_hat} is beyond the cut value of z={spec.z_hat}, the focused wave should vanish")

    exponent = 0.5 * (grid.dimension + 1)
    normalization = spec.thickness**-exponent if spec.thickness > 0 else 1.0
    state = normalization * validator.final_states(h_tilde)
    density = state**2 * medium.volume_weights
    total = float(np.sum(density))

    centre = grid.nearest_node(x_hat.point)
    cell_time = grid.h / medium.wave_speed[centre]
    from_centre = travel_time_distance(grid, medium, [centre]).values
    fractions = {
        k * grid.h: float(np.sum(density[from_centre <= k * cell_time + 1e-12]) / total) if total > 0 else 0.0
        for k in CONCENTRATION_RADII
    }
    slab = _slab_indicator(grid, medium, spec, margin=cell_time)
    slab_fraction = float(np.sum(density[slab]) / total) if total > 0 else 0.0
    report = ConcentrationReport(
        x_hat=x_hat.point,
        minimizing=x_hat.minimizing,
        normalization=normalization,
        normalized_norm=float(np.sqrt(total)),
        radius_fractions=fractions,
        slab_fraction=slab_fraction,
    )
    logger.debug(f"Focusing at {x_hat.point}: slab fraction {slab_fraction:.3f}, radii {fractions}")
    return FocusingProfile(field=state, report=report)


def _slab_indicator(grid: DomainGrid, medium: MediumSpec, spec: FocusSpec, margin: float = 0.0) -> np.ndarray:
    from_patch = travel_time_distance(grid, medium, grid.boundary_nodes[list(spec.patch(grid))]).values
    from_boundary = boundary_distance_field(grid, medium).values
    return (from_patch <= spec.t_hat + margin) & (from_boundary > spec.t0 - margin)


def focusing_schedule(
    oracle: MeasurementOracle, validator: ValidationSolver, f: np.ndarray, spec: FocusSpec
) -> list[FocusingProfile]:
    """Focusing profiles along the patch schedule j = 0..j_max at fixed T0."""
    return [
        focusing_profile(validator, focusing_source(oracle, f, spec, j).signal, spec) for j in range(spec.j_max + 1)
    ]


@dataclass(eq=False)
class Probe:
    """Test source g; `value` is u^g(x_hat, T) when it is known, otherwise estimates are relative."""

    signal: np.ndarray
    value: float | None = None
    description: str = ""


def analytic_probe(
    grid: DomainGrid,
    medium: MediumSpec,
    spec: FocusSpec,
    margin: float | None = None,
    half_width: float | None = None,
) -> Probe:
    """
    A unit-area pulse at z_hat whose wave equals 1 on a neighbourhood of x_hat at time T.

    The constant plateau behind the front of a unit-area Neumann pulse only exists for a homogeneous interval without
    potential or impedance, and only until the reflection from the far end arrives.

    :param grid: one-dimensional grid
    :param medium: homogeneous medium with q = 0 and eta = 0
    :param spec: focusing setup
    :param margin: travel time by which the plateau extends beyond x_hat, four cells by default
    :param half_width: pulse half width, three cells by default
    :returns: probe with u^g(x_hat, T) = 1
    """
    if grid.dimension != 1 or not medium.is_homogeneous or medium.potential.any() or medium.impedance.any():
        raise GridValidationError("The analytic probe needs a homogeneous interval with q = 0 and eta = 0.")
    c = medium.c_max
    margin = 4 * grid.h / c if margin is None else margin
    half_width = 3 * grid.h / c if half_width is None else half_width
    horizon = grid.horizon_T
    centre = horizon - spec.t_hat - margin - half_width
    if centre - half_width < 0:
        raise GridValidationError(f"T_hat={spec.t_hat} leaves no room for the probe pulse before T={horizon}.")
    crossing = grid.extents[0] / c
    if centre - half_width + 2 * crossing - spec.t_hat - margin < horizon:
        raise GridValidationError("The reflection of the probe pulse reaches x_hat before T.")
    signal = unit_area_pulse(grid, spec.z_hat, centre, half_width)
    return Probe(signal, 1.0, f"unit-area pulse at t={centre:.4f}")


def self_hosted_probe(
    oracle: MeasurementOracle, base: np.ndarray, spec: FocusSpec, margin: float | None = None
) -> Probe:
    """
    Probe g = h(alpha; Gamma_0 x [T - T_hat - margin, T]), whose wave at T reproduces u^base(T) around x_hat.

    u^g(x_hat, T) is unknown, so point values recovered with this probe are relative to u^base(x_hat, T).
    """
    grid = oracle.grid
    margin = 4 * grid.h if margin is None else margin
    window = min(spec.t_hat + margin, grid.horizon_T)
    projector = ProjectorSpec.from_windows([(spec.patch(grid, 0), window)])
    path = control_limit(oracle, base, projector, spec.alpha_schedule, spec.config)
    return Probe(path.final(), None, "self-hosted")


@dataclass
class PointValueEstimate:
    """Recovered u^f(x_hat, T) with its spread over the thickness schedule."""

    value: float
    spread: float
    unreliable: bool
    relative: bool
    thicknesses: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    absolute: float | None = None
    query_count: int = 0


def point_value_recover(
    oracle: MeasurementOracle,
    f: np.ndarray,
    spec: FocusSpec,
    probe: Probe,
    thicknesses: Sequence[float] | None = None,
    c0: float | None = None,
) -> PointValueEstimate:
    """
    Recover u^f(x_hat, T) from boundary data.

    For every slab thickness the estimate is <K h(f), g> / <K h(g), g> times u^g(x_hat, T), where h(.) are focusing
    sources; the slab constant cancels in the ratio. The value at the thinnest slab is reported, the largest deviation
    over the schedule is its error bar.

    :param oracle: measurement oracle
    :param f: source whose point value is wanted
    :param spec: focusing setup, its T0 is replaced by the thickness schedule
    :param probe: test source
    :param thicknesses: values of T_hat - T0, 8h, 4h and 2h by default
    :param c0: slab constant; enables the absolute estimate <K h(f), g> (T_hat - T0)^(-(m+1)/2) C0 / u^g(x_hat, T)
    :returns: estimate with spread and reliability flag
    """
    grid = oracle.grid
    first = oracle.query_count
    if thicknesses is None:
        thicknesses = [k * grid.h for k in DEFAULT_THICKNESSES]
    thicknesses = sorted((float(t) for t in thicknesses), reverse=True)
    scale = 1.0 if probe.value is None else probe.value
    convention = spec.config.convention
    exponent = 0.5 * (grid.dimension + 1)

    values, absolute = [], None
    for thickness in thicknesses:
        local = spec.with_t0(max(spec.t_hat - thickness, 0.0))
        numerator = blago_inner_product(oracle, focusing_source(oracle, f, local).signal, probe.signal, convention)
        if numerator == 0.0:
            values.append(0.0)
            continue
        denominator = blago_inner_product(
            oracle, focusing_source(oracle, probe.signal, local).signal, probe.signal, convention
        )
        if denominator == 0.0:
            raise NumericalFailure("The probe does not reach the focusing point, its focused pairing vanishes.")
        values.append(numerator / denominator * scale)
        if c0 is not None and probe.value:
            absolute = numerator * thickness**-exponent * c0 / probe.value

    value = values[-1]
    spread = float(max(abs(v - value) for v in values))
    estimate = PointValueEstimate(
        value=value,
        spread=spread,
        unreliable=spread > UNRELIABLE_SPREAD * abs(value),
        relative=probe.value is None,
        thicknesses=list(thicknesses),
        values=values,
        absolute=absolute,
        query_count=oracle.query_count - first,
    )
    if estimate.unreliable:
        logger.warning(f"Point value {value:.4g} is unreliable, schedule spread {spread:.3g}")
    return estimate


@dataclass
class CutLocusCheck:
    """Ratio of focused masses at T_hat and T_hat / 2, computed from boundary data only."""

    mass_at_t_hat: float
    mass_at_half: float
    ratio: float
    beyond_cut: bool


def cut_locus_check(oracle: MeasurementOracle, f: np.ndarray, spec: FocusSpec) -> CutLocusCheck:
    """
    Flag a focusing time beyond the cut value of z_hat by the collapse of the focused mass.

    The mass |u^h(T)|^2 = <K h, h> of the focusing source, normalized by the slab thickness, is compared at T_hat and
    at T_hat / 2 with equal thickness; a ratio below 10% is taken as T_hat > tau(z_hat).
    """
    convention = spec.config.convention
    exponent = 0.5 * (oracle.grid.dimension + 1)
    masses = []
    for t_hat in (spec.t_hat, 0.5 * spec.t_hat):
        local = FocusSpec(
            spec.z_hat,
            t_hat,
            max(t_hat - spec.thickness, 0.0),
            spec.config,
            spec.alpha_schedule,
            spec.patch_radius,
            spec.j_max,
            "slab",
        )
        signal = focusing_source(oracle, f, local).signal
        masses.append(blago_inner_product(oracle, signal, signal, convention) * spec.thickness**-exponent)
    ratio = masses[0] / masses[1] if masses[1] > 0 else 0.0
    beyond = ratio < CUT_MASS_RATIO
    if beyond:
        logger.info(f"Focused mass collapses beyond T_hat={spec.t_hat} (ratio {ratio:.3g})")
    return CutLocusCheck(masses[0], masses[1], ratio, beyond)
