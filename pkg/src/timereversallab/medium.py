"""
Computational domain, hidden medium and travel-time geometry.

Grids are rectilinear (an interval or a rectangle) with equal node spacing along all axes. Nodes are flattened in
C-order. Boundary nodes are addressed by their *boundary position*, i.e. their index in `DomainGrid.boundary_nodes`;
in two dimensions the boundary list runs counterclockwise starting at the origin corner.
"""

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
import skfmm
from scipy.integrate import cumulative_trapezoid, solve_ivp
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import distance_transform_edt

from .exceptions import EmptySlabError, GeodesicExitError, GridValidationError
from .logging_helper import get_logger

logger = get_logger(__name__)

CFL_FACTOR = 0.9
MIN_RESOLUTION = 16
# travel times inside this many cells around a source are straight rays
SOURCE_RADIUS_CELLS = 3

FieldValue = float | np.ndarray | Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class DomainGrid:
    """Node lattice of the domain together with the time lattice t_k = k dt, k = 0..2N."""

    dimension: int
    extents: tuple[float, ...]
    shape: tuple[int, ...]
    h: float
    dt: float
    n_half: int
    c_max: float
    coordinates: np.ndarray
    boundary_nodes: np.ndarray
    boundary_measure: np.ndarray
    surface_weights: np.ndarray
    cell_volume: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_nodes)

    @property
    def n_samples(self) -> int:
        """Number of time samples on [0, 2T]."""
        return 2 * self.n_half + 1

    @property
    def horizon_T(self) -> float:
        return self.n_half * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_samples)

    @property
    def signal_shape(self) -> tuple[int, int]:
        return (self.n_boundary, self.n_samples)

    @property
    def courant_number(self) -> float:
        return self.c_max * self.dt / self.h

    @property
    def boundary_coordinates(self) -> np.ndarray:
        return self.coordinates[self.boundary_nodes]

    @property
    def boundary_length(self) -> float:
        """Euclidean measure of the boundary (number of end points in 1D)."""
        return float(np.sum(self.boundary_measure))

    @property
    def boundary_arclength(self) -> np.ndarray:
        """Arclength position of each boundary node along the counterclockwise loop (0 and L in 1D)."""
        if self.dimension == 1:
            return np.array([0.0, self.extents[0]])
        return self.h * np.arange(self.n_boundary)

    @property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(self.h * np.arange(n) for n in self.shape)

    def nearest_node(self, point: np.ndarray) -> int:
        """Flat index of the node closest to a point."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        multi = tuple(int(np.clip(np.rint(p / self.h), 0, n - 1)) for p, n in zip(point, self.shape))
        return int(np.ravel_multi_index(multi, self.shape))

    def boundary_position(self, node: int) -> int:
        """Boundary position of a flat node index."""
        hits = np.flatnonzero(self.boundary_nodes == node)
        if len(hits) == 0:
            raise GridValidationError(f"Node {node} is not a boundary node.")
        return int(hits[0])


@dataclass(frozen=True, eq=False)
class MediumSpec:
    """The hidden medium: wave speed c and potential q on the nodes, impedance eta on the boundary nodes."""

    dimension: int
    wave_speed: np.ndarray
    potential: np.ndarray
    impedance: np.ndarray
    volume_weights: np.ndarray

    @property
    def density(self) -> float:
        """The density mu is fixed to one."""
        return 1.0

    @property
    def c_min(self) -> float:
        return float(np.min(self.wave_speed))

    @property
    def c_max(self) -> float:
        return float(np.max(self.wave_speed))

    @property
    def is_homogeneous(self) -> bool:
        return bool(np.ptp(self.wave_speed) <= 1e-12 * self.c_max)


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Travel-time distance d(x, S) on all nodes."""

    values: np.ndarray
    sources: np.ndarray

    def within(self, t: float) -> np.ndarray:
        """Node-wise indicator of {d(x, S) <= t}."""
        return self.values <= t + 1e-12

    def at(self, grid: DomainGrid, point: np.ndarray) -> float:
        """Linearly interpolated distance at an arbitrary point of the domain."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if grid.dimension == 1:
            return float(np.interp(point[0], grid.axes[0], self.values))
        interpolator = RegularGridInterpolator(grid.axes, self.values.reshape(grid.shape))
        return float(interpolator(point[None, :])[0])


@dataclass(frozen=True)
class GeodesicPoint:
    """End point of a normal geodesic and whether the geodesic still minimizes the distance to the boundary."""

    point: np.ndarray
    minimizing: bool
    boundary_distance: float
    arclength: float


@dataclass(frozen=True)
class C0Estimate:
    """Extrapolated slab constant with the ratios it was extrapolated from."""

    value: float
    deltas: np.ndarray
    ratios: np.ndarray


def _boundary_loop(shape: tuple[int, ...]) -> np.ndarray:
    """Flat indices of the boundary nodes, counterclockwise from the origin corner."""
    if len(shape) == 1:
        return np.array([0, shape[0] - 1])
    n1, n2 = shape
    loop = [(i, 0) for i in range(n1)]
    loop += [(n1 - 1, j) for j in range(1, n2)]
    loop += [(i, n2 - 1) for i in range(n1 - 2, -1, -1)]
    loop += [(0, j) for j in range(n2 - 2, 0, -1)]
    return np.array([np.ravel_multi_index(index, shape) for index in loop])


def sample_node_field(grid_shape: tuple[int, ...], coordinates: np.ndarray, value: FieldValue, name: str) -> np.ndarray:
    """
    Evaluate a field description on a set of points.

    :param grid_shape: node shape of the grid, used to accept arrays given in grid layout
    :param coordinates: points, shape (n, m)
    :param value: a constant, an array with one value per point, or a callable evaluated on the coordinates
    :param name: field name used in error messages
    :returns: flat array of length n
    """
    n = len(coordinates)
    if callable(value):
        values = np.asarray(value(coordinates), dtype=float).reshape(-1)
    elif np.isscalar(value):
        values = np.full(n, float(value))
    else:
        values = np.asarray(value, dtype=float).reshape(-1)
    if values.shape != (n,):
        raise GridValidationError(f"Field '{name}' has {values.size} values, expected {n} for grid {grid_shape}.")
    if not np.all(np.isfinite(values)):
        raise GridValidationError(f"Field '{name}' contains non-finite values.")
    return values


def build_grid(
    domain_extents: float | Iterable[float],
    resolution: int | Iterable[int],
    horizon_T: float,
    wave_speed: FieldValue = 1.0,
) -> DomainGrid:
    """
    Build the node and time lattice of an interval or a rectangle.

    dt is the largest value not exceeding CFL_FACTOR * h / (sqrt(m) c_max) for which T is an integer multiple of dt.

    :param domain_extents: length of the domain along each axis
    :param resolution: number of nodes along each axis (a single value is used for all axes)
    :param horizon_T: half of the observation horizon 2T
    :param wave_speed: wave speed description, used for the CFL bound and the boundary surface weights
    :returns: the grid
    """
    extents = tuple(float(e) for e in np.atleast_1d(np.asarray(domain_extents, dtype=float)))
    dimension = len(extents)
    if dimension not in (1, 2):
        raise GridValidationError(f"Only intervals and rectangles are supported, got {dimension} extents.")
    if any(e <= 0 or not np.isfinite(e) for e in extents):
        raise GridValidationError(f"Domain extents must be positive, got {extents}.")
    counts = np.atleast_1d(np.asarray(resolution))
    if len(counts) == 1:
        counts = np.repeat(counts, dimension)
    if len(counts) != dimension:
        raise GridValidationError(f"Resolution {tuple(counts)} does not match the dimension {dimension}.")
    shape = tuple(int(n) for n in counts)
    if any(n < MIN_RESOLUTION for n in shape):
        raise GridValidationError(f"At least {MIN_RESOLUTION} nodes per axis are required, got {shape}.")
    if not horizon_T > 0:
        raise GridValidationError(f"The horizon T must be positive, got {horizon_T}.")

    spacings = [e / (n - 1) for e, n in zip(extents, shape)]
    h = spacings[0]
    if not np.allclose(spacings, h, rtol=1e-9):
        raise GridValidationError(f"Node spacing must agree along all axes, got {spacings}.")

    axes = [h * np.arange(n) for n in shape]
    coordinates = np.stack([axis.ravel() for axis in np.meshgrid(*axes, indexing="ij")], axis=-1)
    speed = sample_node_field(shape, coordinates, wave_speed, "wave_speed")
    if np.any(speed <= 0):
        raise GridValidationError("The wave speed must be positive everywhere.")
    c_max = float(np.max(speed))

    dt_cfl = CFL_FACTOR * h / (np.sqrt(dimension) * c_max)
    n_half = int(np.ceil(horizon_T / dt_cfl - 1e-12))
    dt = horizon_T / n_half

    boundary_nodes = _boundary_loop(shape)
    if dimension == 1:
        boundary_measure = np.ones(2)
    else:
        boundary_measure = np.full(len(boundary_nodes), h)
    surface_weights = speed[boundary_nodes] ** (1 - dimension) * boundary_measure

    axis_weights = []
    for n in shape:
        weights = np.full(n, h)
        weights[[0, -1]] = 0.5 * h
        axis_weights.append(weights)
    cell_volume = axis_weights[0]
    for weights in axis_weights[1:]:
        cell_volume = np.multiply.outer(cell_volume, weights)

    logger.debug(f"Grid {shape}: h={h:.5g}, dt={dt:.5g}, {2 * n_half} steps, courant number {c_max * dt / h:.3f}")
    return DomainGrid(
        dimension=dimension,
        extents=extents,
        shape=shape,
        h=h,
        dt=dt,
        n_half=n_half,
        c_max=c_max,
        coordinates=coordinates,
        boundary_nodes=boundary_nodes,
        boundary_measure=boundary_measure,
        surface_weights=surface_weights,
        cell_volume=np.asarray(cell_volume).ravel(),
    )


def build_medium(
    grid: DomainGrid,
    wave_speed: FieldValue = 1.0,
    potential: FieldValue = 0.0,
    impedance: FieldValue = 0.0,
) -> MediumSpec:
    """
    Sample the medium on the grid.

    The wave speed must be the one the grid was built with, since it fixes dt and the boundary surface weights.

    :param grid: grid built with the same wave speed
    :param wave_speed: c on the nodes
    :param potential: q on the nodes
    :param impedance: eta on the boundary nodes (callables receive boundary coordinates)
    :returns: the medium
    """
    speed = sample_node_field(grid.shape, grid.coordinates, wave_speed, "wave_speed")
    if np.any(speed <= 0):
        raise GridValidationError("The wave speed must be positive everywhere.")
    weights = speed[grid.boundary_nodes] ** (1 - grid.dimension) * grid.boundary_measure
    if np.max(speed) > grid.c_max * (1 + 1e-12) or not np.allclose(weights, grid.surface_weights, rtol=1e-12):
        raise GridValidationError("The grid was built for a different wave speed than the medium.")
    q = sample_node_field(grid.shape, grid.coordinates, potential, "potential")
    eta = sample_node_field((grid.n_boundary,), grid.boundary_coordinates, impedance, "impedance")
    return MediumSpec(
        dimension=grid.dimension,
        wave_speed=speed,
        potential=q,
        impedance=eta,
        volume_weights=grid.cell_volume * speed ** (-grid.dimension),
    )


def _eikonal_travel_time(grid: DomainGrid, speed: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """
    First-arrival times from a set of source nodes on the 2D lattice.

    The zero level set handed to scikit-fmm is the circle of SOURCE_RADIUS_CELLS cells around the sources. Nodes inside
    it get the straight-ray time with the mean slowness of both end points; outside, the marched time is shifted by the
    radius times the slowness of the nearest source.
    """
    radius = SOURCE_RADIUS_CELLS * grid.h
    separation, nearest = distance_transform_edt(~sources, sampling=grid.h, return_indices=True)
    slowness = 1.0 / speed
    source_slowness = slowness[tuple(nearest)]
    straight = separation * 0.5 * (source_slowness + slowness)
    phi = separation - radius
    if not np.any(phi > 0):
        return straight
    marched = np.abs(np.asarray(skfmm.travel_time(phi, speed, dx=[grid.h, grid.h], order=1)))
    return np.where(phi <= 0, straight, marched + radius * source_slowness)


def travel_time_distance(
    grid: DomainGrid,
    medium: MediumSpec,
    source_set: Iterable[int] | np.ndarray,
) -> DistanceField:
    """
    Travel-time distance d(x, S) from a set of nodes.

    Exact integration of 1/c in 1D, first-order fast marching (scikit-fmm) in 2D.

    :param grid: the grid
    :param medium: the medium
    :param source_set: flat node indices or a boolean node mask
    :returns: distance field on all nodes
    """
    sources = np.asarray(source_set)
    if sources.dtype == bool:
        mask = sources.reshape(-1)
    else:
        mask = np.zeros(grid.n_nodes, dtype=bool)
        mask[sources.astype(int).reshape(-1)] = True
    if not mask.any():
        raise GridValidationError("The source set of a distance field must not be empty.")

    if grid.dimension == 1:
        coordinate = cumulative_trapezoid(1.0 / medium.wave_speed, grid.axes[0], initial=0.0)
        values = np.min(np.abs(coordinate[:, None] - coordinate[None, mask]), axis=1)
    else:
        values = _eikonal_travel_time(grid, medium.wave_speed.reshape(grid.shape), mask.reshape(grid.shape)).ravel()
    return DistanceField(values=values, sources=np.flatnonzero(mask))


def boundary_distance_field(grid: DomainGrid, medium: MediumSpec) -> DistanceField:
    """Distance d(x, dM) to the whole boundary."""
    return travel_time_distance(grid, medium, grid.boundary_nodes)


def domain_of_influence(grid: DomainGrid, medium: MediumSpec, gamma: Iterable[int], t: float) -> np.ndarray:
    """
    Node-wise indicator of M(gamma, t) = {x : d(x, gamma) <= t}.

    :param grid: the grid
    :param medium: the medium
    :param gamma: boundary positions of the boundary subset
    :param t: travel time radius
    :returns: boolean node mask
    """
    if t < 0:
        raise GridValidationError(f"Domains of influence need t >= 0, got {t}.")
    positions = np.asarray(list(gamma), dtype=int)
    if len(positions) == 0:
        return np.zeros(grid.n_nodes, dtype=bool)
    return travel_time_distance(grid, medium, grid.boundary_nodes[positions]).within(t)


def inward_normal(grid: DomainGrid, z: int) -> np.ndarray:
    """Euclidean inward unit normal at a boundary position; corners use the bisector."""
    point = grid.boundary_coordinates[z]
    normal = np.zeros(grid.dimension)
    for axis in range(grid.dimension):
        if np.isclose(point[axis], 0.0, atol=1e-9 * grid.h):
            normal[axis] += 1.0
        elif np.isclose(point[axis], grid.extents[axis], atol=1e-9 * grid.h):
            normal[axis] -= 1.0
    return normal / np.linalg.norm(normal)


def _inside(grid: DomainGrid, point: np.ndarray, tolerance: float) -> bool:
    return bool(np.all(point >= -tolerance) and np.all(point <= np.asarray(grid.extents) + tolerance))


def normal_geodesic_point(grid: DomainGrid, medium: MediumSpec, z: int, s: float) -> GeodesicPoint:
    """
    Follow the inward normal geodesic from a boundary node for travel time s.

    Straight segments are used in 1D and for constant speed; otherwise the ray equations dx/dt = c^2 p,
    dp/dt = -grad(c)/c are integrated with a step of at most h/4. The point is flagged minimizing when its distance to
    the boundary equals s within two cells of travel time.

    :param grid: the grid
    :param medium: the medium
    :param z: boundary position of the starting node
    :param s: travel time along the geodesic
    :returns: end point and cut-value flag
    """
    if s < 0:
        raise GridValidationError(f"Geodesic arclength must be non-negative, got {s}.")
    start = grid.boundary_coordinates[z]
    normal = inward_normal(grid, z)

    if grid.dimension == 1:
        coordinate = cumulative_trapezoid(1.0 / medium.wave_speed, grid.axes[0], initial=0.0)
        if s > coordinate[-1] + 1e-12:
            raise GeodesicExitError(f"Geodesic from boundary position {z} leaves the interval before t={s}.")
        target = s if normal[0] > 0 else coordinate[-1] - s
        point = np.array([np.interp(target, coordinate, grid.axes[0])])
    elif medium.is_homogeneous:
        point = start + normal * medium.c_max * s
        if not _inside(grid, point, 1e-9 * grid.h):
            raise GeodesicExitError(f"Geodesic from boundary position {z} leaves the domain before t={s}.")
        point = np.clip(point, 0.0, np.asarray(grid.extents))
    else:
        point = _integrate_ray(grid, medium, start, normal, s, z)

    boundary_distance = boundary_distance_field(grid, medium).at(grid, point)
    minimizing = abs(boundary_distance - s) <= 2 * grid.h / medium.c_min
    return GeodesicPoint(point=point, minimizing=minimizing, boundary_distance=boundary_distance, arclength=s)


def _integrate_ray(
    grid: DomainGrid, medium: MediumSpec, start: np.ndarray, normal: np.ndarray, s: float, z: int
) -> np.ndarray:
    """Integrate the unit-speed geodesic of the metric c^-2 dx^2."""
    if s == 0:
        return start.copy()
    speed = medium.wave_speed.reshape(grid.shape)
    gradients = np.gradient(speed, grid.h)
    speed_function = RegularGridInterpolator(grid.axes, speed, bounds_error=False, fill_value=None)
    gradient_functions = [
        RegularGridInterpolator(grid.axes, g, bounds_error=False, fill_value=None) for g in gradients
    ]

    def ray(_, state):
        x, p = state[:2], state[2:]
        c = speed_function(x[None, :])[0]
        grad = np.array([g(x[None, :])[0] for g in gradient_functions])
        return np.concatenate([c**2 * p, -grad / c])

    def leaves_domain(_, state):
        x = state[:2]
        return min(np.min(x), np.min(np.asarray(grid.extents) - x)) + 1e-9 * grid.h

    leaves_domain.terminal = True
    leaves_domain.direction = -1

    c_start = speed_function(start[None, :])[0]
    initial = np.concatenate([start, normal / c_start])
    solution = solve_ivp(
        ray,
        (0.0, s),
        initial,
        events=leaves_domain,
        max_step=grid.h / (4 * medium.c_max),
        rtol=1e-8,
        atol=1e-10,
    )
    if solution.status == 1 or not solution.success:
        raise GeodesicExitError(f"Geodesic from boundary position {z} leaves the domain before t={s}.")
    return solution.y[:2, -1]


def slab_volume(
    grid: DomainGrid,
    medium: MediumSpec,
    z_hat: int,
    t_hat: float,
    t0: float,
    method: str = "nodes",
) -> float:
    """
    Volume vol_g of M({z_hat}, t_hat) minus M(dM, t0) in the measure dV = c^-m dx.

    :param grid: the grid
    :param medium: the medium
    :param z_hat: boundary position of the focusing node
    :param t_hat: radius of the domain of influence of z_hat
    :param t0: radius of the domain of influence of the whole boundary
    :param method: "nodes" counts nodes, "smoothed" weights nodes with cell fractions
    :returns: volume, 0 for an empty slab
    """
    if t0 < 0 or t_hat < 0:
        raise GridValidationError("Slab radii must be non-negative.")
    if t0 >= t_hat:
        return 0.0
    from_point = travel_time_distance(grid, medium, [grid.boundary_nodes[z_hat]]).values
    from_boundary = boundary_distance_field(grid, medium).values
    if method == "nodes":
        inside = (from_point <= t_hat + 1e-12) & (from_boundary > t0 + 1e-12)
        return float(np.sum(medium.volume_weights[inside]))
    if method == "smoothed":
        cell_time = grid.h / medium.wave_speed
        fraction = np.clip((t_hat - from_point) / cell_time + 0.5, 0.0, 1.0)
        fraction *= np.clip((from_boundary - t0) / cell_time + 0.5, 0.0, 1.0)
        return float(np.sum(medium.volume_weights * fraction))
    raise GridValidationError(f"Unknown slab volume method '{method}'.")


def c0_constant(
    grid: DomainGrid,
    medium: MediumSpec,
    z_hat: int,
    t_hat: float,
    delta: float | None = None,
) -> C0Estimate:
    """
    Extrapolate C0 = lim (t_hat - t0)^((m+1)/2) / vol_g(slab) as t0 -> t_hat.

    Ratios are taken at t_hat - t0 in {delta, delta/2, delta/4} and extrapolated linearly to zero thickness.

    :param grid: the grid
    :param medium: the medium
    :param z_hat: boundary position of the focusing node
    :param t_hat: focusing time, below the cut value of z_hat
    :param delta: largest slab thickness, defaults to 8 cells of travel time at z_hat
    :returns: extrapolated constant and the underlying ratios
    """
    if delta is None:
        delta = 8 * grid.h / medium.wave_speed[grid.boundary_nodes[z_hat]]
    deltas = delta / np.array([1.0, 2.0, 4.0])
    exponent = 0.5 * (grid.dimension + 1)
    volumes = np.array([slab_volume(grid, medium, z_hat, t_hat, t_hat - d, method="smoothed") for d in deltas])
    if volumes[0] <= 0:
        raise EmptySlabError(f"The slab at z={z_hat}, T={t_hat} is empty, the focusing time exceeds the cut value.")
    if np.any(volumes <= 0):
        raise EmptySlabError("The slab vanishes on the grid before the finest thickness is reached.")
    ratios = deltas**exponent / volumes
    _, intercept = np.polyfit(deltas, ratios, 1)
    logger.debug(f"C0 ratios {ratios} at thicknesses {deltas}, extrapolated {intercept:.5g}")
    return C0Estimate(value=float(intercept), deltas=deltas, ratios=ratios)
