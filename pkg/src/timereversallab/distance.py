"""
Travel-time distances from boundary measurements.

For x = gamma_(z,nu)(T1) and a boundary node y, the distance d(x, y) is the smallest tau for which the wave of
p = h1 + h2 - h3 - h4 does not vanish at time T. The h_k solve control problems on

    B1 = (Gamma x [T - T1, T]) union B3,  B2 = (Sigma x [T - tau, T]) union B3,
    B3' = (Gamma x [T - T1, T]) union (Sigma x [T - tau, T]) union B3,  B4 = B3 = dM x [T - (T1 - eps), T],

so that u^p(T) is u^f(T) restricted to M(Gamma, T1) intersected with M(Sigma, tau) minus M(dM, T1 - eps). The
non-vanishing is decided with <K p, p> = |u^p(T)|^2 against a threshold relative to <K f, f>.
"""

from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.ndimage import convolve1d

from .boundary_ops import ProjectorSpec, boundary_patch, unit_area_pulse
from .exceptions import GridValidationError
from .focusing import FocusSpec, cut_locus_check
from .logging_helper import get_logger
from .measurement import MeasurementOracle, blago_inner_product
from .medium import DomainGrid, MediumSpec, domain_of_influence
from .ptr import IterationConfig, IterationResult, solve_control

logger = get_logger(__name__)

BisectionStatus = Literal["converged", "widened", "failure"]

ARRIVAL_THRESHOLD = 0.05
WAVESPEED_NEIGHBOURS = 4


@dataclass
class DistanceQuery:
    """Boundary nodes, geodesic length and schedules of one distance evaluation."""

    z: int
    y: int
    t1: float
    config: IterationConfig
    j: int = 3
    epsilon: float | None = None
    patch_radius: float | None = None
    theta: float = 1e-3

    def __post_init__(self):
        if self.t1 <= 0:
            raise GridValidationError(f"The geodesic length T1 must be positive, got {self.t1}.")
        if self.j < 0:
            raise GridValidationError(f"The patch level must be non-negative, got {self.j}.")
        if not self.theta > 0:
            raise GridValidationError(f"The decision threshold must be positive, got {self.theta}.")

    def eps(self, grid: DomainGrid) -> float:
        return 2 * grid.h if self.epsilon is None else self.epsilon

    def validate(self, grid: DomainGrid):
        for name, position in (("z", self.z), ("y", self.y)):
            if not 0 <= position < grid.n_boundary:
                raise GridValidationError(f"{name}={position} is not a boundary position.")
        if self.t1 > grid.horizon_T:
            raise GridValidationError(f"T1={self.t1} exceeds the horizon T={grid.horizon_T}.")
        if self.eps(grid) > self.t1:
            raise GridValidationError(f"eps={self.eps(grid)} exceeds T1={self.t1}.")

    def retarget(self, y: int) -> "DistanceQuery":
        return DistanceQuery(self.z, y, self.t1, self.config, self.j, self.epsilon, self.patch_radius, self.theta)

    def patches(self, grid: DomainGrid) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Gamma_j around z and Sigma_j around y."""
        radius = (grid.boundary_length / 8 if self.patch_radius is None else self.patch_radius) * 2.0**-self.j
        return boundary_patch(grid, self.z, radius), boundary_patch(grid, self.y, radius)

    def projectors(self, grid: DomainGrid, tau: float) -> list[ProjectorSpec]:
        """The four projectors B1..B4 at search time tau."""
        gamma, sigma = self.patches(grid)
        first = ProjectorSpec.from_windows([(gamma, self.t1)])
        second = ProjectorSpec.from_windows([(sigma, tau)])
        background = ProjectorSpec.full_boundary(grid, self.t1 - self.eps(grid))
        return [
            first.union(background),
            second.union(background),
            first.union(second, background),
            background,
        ]


def influence_sets(grid: DomainGrid, medium: MediumSpec, query: DistanceQuery, tau: float) -> list[np.ndarray]:
    """Node indicators of the domains of influence of B1..B4."""
    gamma, sigma = query.patches(grid)
    near_z = domain_of_influence(grid, medium, gamma, query.t1)
    near_y = domain_of_influence(grid, medium, sigma, tau)
    near_boundary = domain_of_influence(grid, medium, range(grid.n_boundary), query.t1 - query.eps(grid))
    return [near_z | near_boundary, near_y | near_boundary, near_z | near_y | near_boundary, near_boundary]


def chi_algebra_residual(grid: DomainGrid, medium: MediumSpec, query: DistanceQuery, tau: float) -> int:
    """Largest deviation between the indicator of the test set and the signed sum of the four indicators."""
    n1, n2, n3, n4 = (s.astype(int) for s in influence_sets(grid, medium, query, tau))
    gamma, sigma = query.patches(grid)
    target = (
        domain_of_influence(grid, medium, gamma, query.t1)
        & domain_of_influence(grid, medium, sigma, tau)
        & ~domain_of_influence(grid, medium, range(grid.n_boundary), query.t1 - query.eps(grid))
    )
    return int(np.max(np.abs(target.astype(int) - (n1 + n2 - n3 - n4))))


@dataclass
class ConditionResult:
    """Outcome of one test at search time tau."""

    tau: float
    value: float
    threshold: float
    holds: bool
    indeterminate: bool


class ConditionTester:
    """
    Decides the non-vanishing condition for a fixed source, keeping control solves for reuse.

    Solves are cached per projector, so the tau-independent runs for B1 and B4 are shared by all search times and by
    all targets y with the same z and T1.
    """

    oracle: MeasurementOracle
    f: np.ndarray
    query: DistanceQuery
    trace: list[ConditionResult]

    def __init__(
        self,
        oracle: MeasurementOracle,
        f: np.ndarray,
        query: DistanceQuery,
        cache: dict[ProjectorSpec, IterationResult] | None = None,
    ):
        query.validate(oracle.grid)
        self.oracle = oracle
        self.f = np.asarray(f, dtype=float)
        self.query = query
        self.trace = []
        self._cache = {} if cache is None else cache
        self._reference: float | None = None

    @property
    def reference(self) -> float:
        """<K f, f> = |u^f(T)|^2."""
        if self._reference is None:
            self._reference = blago_inner_product(self.oracle, self.f, self.f, self.query.config.convention)
        return self._reference

    def retarget(self, y: int) -> "ConditionTester":
        tester = ConditionTester(self.oracle, self.f, self.query.retarget(y), self._cache)
        tester._reference = self._reference
        return tester

    def _control(self, projector: ProjectorSpec) -> np.ndarray:
        if projector not in self._cache:
            self._cache[projector] = solve_control(self.oracle, self.f, projector, self.query.config)
        return self._cache[projector].h

    def test(self, tau: float) -> ConditionResult:
        """
        Evaluate <K p, p> at search time tau.

        :param tau: search time in [0, T]
        :returns: test value, threshold and decision; values in [0.5, 2] x threshold are indeterminate
        """
        grid = self.oracle.grid
        if not 0 <= tau <= grid.horizon_T * (1 + 1e-9):
            raise GridValidationError(f"Search time {tau} lies outside [0, T].")
        threshold = self.query.theta * abs(self.reference)
        if not self.f.any():
            result = ConditionResult(tau, 0.0, threshold, False, False)
            self.trace.append(result)
            return result
        h1, h2, h3, h4 = (self._control(p) for p in self.query.projectors(grid, min(tau, grid.horizon_T)))
        p = h1 + h2 - h3 - h4
        value = blago_inner_product(self.oracle, p, p, self.query.config.convention)
        magnitude = abs(value)
        result = ConditionResult(
            tau=tau,
            value=value,
            threshold=threshold,
            holds=magnitude > threshold,
            indeterminate=0.5 * threshold <= magnitude <= 2.0 * threshold,
        )
        logger.debug(f"tau={tau:.4f}: <Kp,p>={value:.4e} against {threshold:.4e} -> {result.holds}")
        self.trace.append(result)
        return result

    def trace_rows(self) -> list[list]:
        """Decision trace rows (tau, j, eps, value, decision)."""
        eps = self.query.eps(self.oracle.grid)
        rows = []
        for result in self.trace:
            decision = "indeterminate" if result.indeterminate else str(result.holds).lower()
            rows.append([result.tau, self.query.j, eps, result.value, decision])
        return rows

    @property
    def monotone(self) -> bool:
        """No search time decided false lies above one decided true."""
        decided = [r for r in self.trace if not r.indeterminate]
        trues = [r.tau for r in decided if r.holds]
        falses = [r.tau for r in decided if not r.holds]
        return not trues or not falses or max(falses) <= min(trues)


def condition_test(
    oracle: MeasurementOracle, f: np.ndarray, query: DistanceQuery, tau: float
) -> tuple[bool, float]:
    """Decide whether u^f(T) restricted to the test set at search time tau is non-zero."""
    result = ConditionTester(oracle, f, query).test(tau)
    return result.holds, result.value


@dataclass
class DistanceEstimate:
    """Bisection result for d(x, y)."""

    value: float
    bracket: tuple[float, float]
    status: BisectionStatus
    query_count: int
    monotone: bool
    trace: list[list] = field(default_factory=list)


def boundary_distance(
    oracle: MeasurementOracle,
    f: np.ndarray,
    query: DistanceQuery,
    tester: ConditionTester | None = None,
) -> DistanceEstimate:
    """
    Bisect on tau for the smallest search time at which the condition holds.

    The bracket is refined to 2 dt. An indeterminate midpoint is replaced by the midpoints of the two halves; if those
    are indeterminate too, the current bracket is reported as widened. If the condition fails at tau = T there is no
    bracket and the status is failure.

    :param oracle: measurement oracle
    :param f: generic source whose wave covers the domain at time T
    :param query: distance query
    :param tester: optional tester sharing cached control solves
    :returns: midpoint of the final bracket together with the bracket and status
    """
    grid = oracle.grid
    tester = tester or ConditionTester(oracle, f, query)
    first = oracle.query_count
    lo, hi = 0.0, grid.horizon_T
    status: BisectionStatus = "converged"

    top = tester.test(hi)
    if not top.holds:
        logger.warning(f"Condition fails at tau=T for z={query.z}, y={query.y}: no bracket")
        status = "failure"
    while status == "converged" and hi - lo > 2 * grid.dt:
        mid = 0.5 * (lo + hi)
        decided = None
        for tau in (mid, 0.5 * (lo + mid), 0.5 * (mid + hi)):
            result = tester.test(tau)
            if not result.indeterminate:
                decided = result
                break
        if decided is None:
            status = "widened"
            break
        if decided.holds:
            hi = decided.tau
        else:
            lo = decided.tau

    estimate = DistanceEstimate(
        value=0.5 * (lo + hi) if status != "failure" else float("nan"),
        bracket=(lo, hi),
        status=status,
        query_count=oracle.query_count - first,
        monotone=tester.monotone,
        trace=tester.trace_rows(),
    )
    logger.info(f"d(x, y={query.y}) ~ {estimate.value:.4f} in [{lo:.4f}, {hi:.4f}] ({status})")
    return estimate


@dataclass
class BoundaryDistanceFunction:
    """r_x(z_i) = d(x, z_i) on sampled boundary nodes for x = gamma_(z,nu)(T1)."""

    z: int
    t1: float
    positions: list[int]
    values: np.ndarray
    statuses: list[BisectionStatus]
    beyond_cut: bool | None = None
    estimates: list[DistanceEstimate] = field(default_factory=list)

    def lipschitz_excess(self, boundary_metric: np.ndarray) -> float:
        """Largest |r_x(z_i) - r_x(z_j)| - d(z_i, z_j) over sampled pairs; non-positive for a 1-Lipschitz map."""
        index = np.asarray(self.positions)
        differences = np.abs(self.values[:, None] - self.values[None, :])
        return float(np.nanmax(differences - boundary_metric[np.ix_(index, index)]))

    def rows(self) -> list[list]:
        return [[p, v, s] for p, v, s in zip(self.positions, self.values, self.statuses)]


def boundary_distance_function(
    oracle: MeasurementOracle,
    f: np.ndarray,
    template: DistanceQuery,
    boundary_sample: Iterable[int],
    check_cut: bool = False,
) -> BoundaryDistanceFunction:
    """
    Evaluate the boundary distance function of x = gamma_(z,nu)(T1) on a sample of boundary nodes.

    Failures at single nodes are recorded as NaN with their status. With check_cut the focused-mass collapse heuristic
    flags T1 beyond the cut value of z.

    :param oracle: measurement oracle
    :param f: generic source
    :param template: query providing z, T1 and the schedules; its y is replaced by every sampled node
    :param boundary_sample: boundary positions
    :param check_cut: run the cut-value heuristic
    :returns: sampled boundary distance function
    """
    positions = [int(b) for b in boundary_sample]
    tester = ConditionTester(oracle, f, template)
    estimates = [boundary_distance(oracle, f, template.retarget(y), tester.retarget(y)) for y in positions]
    beyond = None
    if check_cut:
        spec = FocusSpec(
            z_hat=template.z,
            t_hat=template.t1,
            t0=max(template.t1 - template.eps(oracle.grid), 0.0),
            config=template.config,
            patch_radius=template.patch_radius,
            j_max=template.j,
        )
        beyond = cut_locus_check(oracle, f, spec).beyond_cut
    return BoundaryDistanceFunction(
        template.z,
        template.t1,
        positions,
        np.array([e.value for e in estimates]),
        [e.status for e in estimates],
        beyond,
        estimates,
    )


@dataclass(eq=False)
class ArrivalMap:
    """First-arrival travel times between boundary positions."""

    times: np.ndarray
    raw: np.ndarray
    positions: np.ndarray
    pulse_center: float

    @property
    def flagged(self) -> np.ndarray:
        return np.isnan(self.raw)

    @property
    def asymmetry(self) -> float:
        return float(np.nanmax(np.abs(self.raw - self.raw.T)))


def _first_crossing(times: np.ndarray, trace: np.ndarray, fraction: float) -> float:
    magnitude = np.abs(trace)
    peak = magnitude.max()
    if peak == 0:
        return float("nan")
    level = fraction * peak
    k = int(np.argmax(magnitude >= level))
    if k == 0:
        return float(times[0])
    below, above = magnitude[k - 1], magnitude[k]
    return float(times[k - 1] + (level - below) / (above - below) * (times[k] - times[k - 1]))


def arrival_time_map(
    oracle: MeasurementOracle,
    positions: Sequence[int] | None = None,
    half_width: float | None = None,
) -> ArrivalMap:
    """
    Pick first arrivals between boundary nodes from the responses to short pulses.

    Every source position emits a raised-cosine pulse of half width 3 dt; at every receiver the arrival is the first
    time the trace reaches 5% of its maximum, interpolated linearly and shifted by the pulse centre. Pairs without an
    arrival on [0, 2T] are NaN. The returned matrix is the symmetrized pick matrix.

    :param oracle: measurement oracle, one query per source position
    :param positions: boundary positions used as sources and receivers, all by default
    :param half_width: pulse half width
    :returns: arrival map
    """
    grid = oracle.grid
    positions = np.arange(grid.n_boundary) if positions is None else np.asarray(positions, dtype=int)
    half_width = 3 * grid.dt if half_width is None else half_width
    centre = half_width
    pulses = np.stack([unit_area_pulse(grid, int(b), centre, half_width) for b in positions])
    responses = oracle.apply(pulses)

    raw = np.full((len(positions), len(positions)), np.nan)
    for i, response in enumerate(responses):
        for j, receiver in enumerate(positions):
            raw[i, j] = 0.0 if i == j else _first_crossing(grid.times, response[receiver], ARRIVAL_THRESHOLD) - centre
    raw = np.where(raw < 0, 0.0, raw)
    times = 0.5 * (raw + raw.T)
    logger.info(f"Picked first arrivals between {len(positions)} boundary positions ({np.isnan(raw).sum()} missing)")
    return ArrivalMap(times=times, raw=raw, positions=positions, pulse_center=centre)


def boundary_wavespeed(arrival_map: ArrivalMap, grid: DomainGrid) -> np.ndarray:
    """
    Estimate c on the boundary from short-range arrival times.

    In 1D the two end points are the only boundary positions, so both receive the path average L / d(0, L), which is
    the harmonic mean of c over the interval and equals the local end-point speed only when c is constant.

    In 2D the pick times to up to four neighbours on either side are regressed on the Euclidean separations; the
    inverse slope is the local speed, smoothed over three neighbouring nodes.

    :param arrival_map: arrival map over all boundary positions
    :param grid: the grid
    :returns: speed per boundary position
    """
    times = arrival_map.times
    if grid.dimension == 1:
        return np.full(grid.n_boundary, grid.extents[0] / times[0, 1])
    if len(arrival_map.positions) != grid.n_boundary:
        raise GridValidationError("Boundary wave speeds need arrival times between all boundary positions.")

    coordinates = grid.boundary_coordinates
    n = grid.n_boundary
    speeds = np.full(n, np.nan)
    for i in range(n):
        neighbours = [(i + k) % n for k in range(-WAVESPEED_NEIGHBOURS, WAVESPEED_NEIGHBOURS + 1) if k != 0]
        separation = np.linalg.norm(coordinates[neighbours] - coordinates[i], axis=1)
        picks = times[i, neighbours]
        valid = np.isfinite(picks)
        if valid.sum() < 2:
            continue
        slope, _ = np.polyfit(separation[valid], picks[valid], 1)
        if slope > 0:
            speeds[i] = 1.0 / slope
    filled = np.where(np.isnan(speeds), np.nanmean(speeds), speeds)
    return convolve1d(filled, np.full(3, 1.0 / 3.0), mode="wrap")
