"""
Leapfrog solver for u_tt + A u = 0 with the Robin condition -d_nu u + eta u = f and zero initial data.

The semi-discrete system is W u'' + (S + Q + H) u = E f on the node lattice, where W holds the trapezoid cell volumes
weighted with dV = c^-m dx, S is the stiffness form of c^(2-m) grad u . grad v (5-point in 2D, 3-point in 1D), Q the
potential, H = diag(eta dS_g) the boundary impedance and E injects f dS_g at the boundary nodes. This is the ghost-node
Robin closure written in summation-by-parts form: interior rows of W^-1 S are -c^2 (Laplacian) in 2D and
-c (c u')' in 1D, and the co-normal derivative is the one of the travel-time metric.
"""

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import sparse

from .boundary_ops import mollify
from .exceptions import GridValidationError, SolverInstabilityError
from .logging_helper import get_logger
from .medium import CFL_FACTOR, DomainGrid, MediumSpec

logger = get_logger(__name__)

# A field norm above this multiple of the source norm is treated as a blow-up
INSTABILITY_RATIO = 1e6
INSTABILITY_CHECK_INTERVAL = 16


@dataclass(frozen=True, eq=False)
class WaveSnapshot:
    """Wave field on all nodes at one time."""

    values: np.ndarray
    time: float


@dataclass(eq=False)
class SolveOutput:
    """Raw leapfrog output for a batch of sources."""

    traces: np.ndarray
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    energy: np.ndarray | None = None


def _stiffness_edges(grid: DomainGrid, medium: MediumSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Edge list (i, j, weight) of the stiffness form."""
    index = np.arange(grid.n_nodes).reshape(grid.shape)
    if grid.dimension == 1:
        c = medium.wave_speed
        weight = 0.5 * (c[:-1] + c[1:]) / grid.h
        return index[:-1], index[1:], weight

    heads, tails, weights = [], [], []
    for axis in range(2):
        head = np.take(index, np.arange(grid.shape[axis] - 1), axis=axis)
        tail = np.take(index, np.arange(1, grid.shape[axis]), axis=axis)
        # face length h, halved for edges running along the boundary
        face = np.ones(head.shape)
        other = 1 - axis
        edge_slices = [slice(None), slice(None)]
        for border in (0, -1):
            edge_slices[other] = border
            face[tuple(edge_slices)] = 0.5
        heads.append(head.ravel())
        tails.append(tail.ravel())
        weights.append(face.ravel())
    return np.concatenate(heads), np.concatenate(tails), np.concatenate(weights)


def assemble_operator(grid: DomainGrid, medium: MediumSpec) -> sparse.csr_matrix:
    """Sparse matrix S + Q + H of the semi-discrete system."""
    heads, tails, weights = _stiffness_edges(grid, medium)
    rows = np.concatenate([heads, tails, heads, tails])
    cols = np.concatenate([heads, tails, tails, heads])
    values = np.concatenate([weights, weights, -weights, -weights])
    stiffness = sparse.coo_matrix((values, (rows, cols)), shape=(grid.n_nodes, grid.n_nodes))

    diagonal = medium.potential * medium.volume_weights
    diagonal[grid.boundary_nodes] += medium.impedance * grid.surface_weights
    return (stiffness + sparse.diags(diagonal)).tocsr()


class WaveSolver:
    """Leapfrog solver bound to one grid and medium; solves batches of boundary sources."""

    grid: DomainGrid
    medium: MediumSpec
    operator: sparse.csr_matrix
    mass: np.ndarray

    def __init__(self, grid: DomainGrid, medium: MediumSpec):
        """
        Assemble the discrete operators.

        :param grid: the grid
        :param medium: medium sampled on the same grid
        """
        if medium.wave_speed.shape != (grid.n_nodes,):
            raise GridValidationError("Medium and grid do not match.")
        self.grid = grid
        self.medium = medium
        self.operator = assemble_operator(grid, medium)
        self.mass = medium.volume_weights

    def apply_operator(self, u: np.ndarray) -> np.ndarray:
        """Discrete A u = W^-1 (S + Q + H) u."""
        applied = self.operator @ u
        return applied / (self.mass if applied.ndim == 1 else self.mass[:, None])

    def solve(
        self,
        sources: np.ndarray,
        snapshot_steps: Iterable[int] = (),
        track_energy: bool = False,
    ) -> SolveOutput:
        """
        March a batch of boundary sources through the horizon [0, 2T].

        :param sources: signals of shape (batch, n_boundary, 2N+1)
        :param snapshot_steps: time indices at which interior fields are kept
        :param track_energy: record the discrete energy 1/2|u^(n+1)-u^n|_W^2/dt^2 + 1/2 (u^(n+1))^T A u^n
        :returns: traces of shape (batch, n_boundary, 2N+1), snapshots of shape (batch, n_nodes)
        """
        grid = self.grid
        sources = np.asarray(sources, dtype=float)
        if sources.shape[1:] != grid.signal_shape:
            raise GridValidationError(f"Sources have shape {sources.shape[1:]}, expected {grid.signal_shape}.")
        batch = sources.shape[0]
        steps = set(int(k) for k in snapshot_steps)

        forcing = np.transpose(sources, (2, 1, 0)) * grid.surface_weights[None, :, None]
        # Taylor start from rest: u^1 = dt^2/2 (source at t = 0)
        forcing[0] *= 0.5
        source_norm = float(np.linalg.norm(sources))
        scale = grid.dt**2 / self.mass[:, None]
        nodes = grid.boundary_nodes

        u_prev = np.zeros((grid.n_nodes, batch))
        u = np.zeros((grid.n_nodes, batch))
        traces = np.zeros((grid.n_samples, grid.n_boundary, batch))
        output = SolveOutput(traces=traces)
        if 0 in steps:
            output.snapshots[0] = u.T.copy()
        energy = np.zeros((grid.n_samples - 1, batch)) if track_energy else None

        for n in range(grid.n_samples - 1):
            applied = self.operator @ u
            update = -applied
            update[nodes] += forcing[n]
            u_next = 2.0 * u - u_prev + scale * update
            traces[n + 1] = u_next[nodes]
            if energy is not None:
                velocity = (u_next - u) / grid.dt
                energy[n] = 0.5 * np.sum(self.mass[:, None] * velocity**2, axis=0) + 0.5 * np.sum(
                    u_next * applied, axis=0
                )
            if n + 1 in steps:
                output.snapshots[n + 1] = u_next.T.copy()
            if source_norm > 0 and ((n + 1) % INSTABILITY_CHECK_INTERVAL == 0 or n + 2 == grid.n_samples):
                self._check_stability(u_next, source_norm, n + 1)
            u_prev, u = u, u_next

        output.traces = np.transpose(traces, (2, 1, 0)).copy()
        output.energy = None if energy is None else energy.T.copy()
        return output

    def _check_stability(self, u: np.ndarray, source_norm: float, step: int):
        norm = np.linalg.norm(u)
        if not np.isfinite(norm) or norm > INSTABILITY_RATIO * source_norm:
            courant = self.grid.courant_number
            limit = CFL_FACTOR / np.sqrt(self.grid.dimension)
            message = (
                f"Leapfrog blow-up at step {step}: field norm {norm:.3e} exceeds {INSTABILITY_RATIO:.0e} x source norm."
                f" Courant number c_max dt / h = {courant:.3f} (CFL bound {limit:.3f}); large impedance or potential "
                "values also tighten the bound."
            )
            logger.error(message)
            raise SolverInstabilityError(message, step=step, courant_number=courant)


def snapshot_steps_for(grid: DomainGrid, snapshot_times: Iterable[float]) -> list[int]:
    """Convert snapshot times on the time lattice into step indices."""
    steps = []
    for t in snapshot_times:
        k = int(np.rint(t / grid.dt))
        if abs(k * grid.dt - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= k < grid.n_samples:
            raise GridValidationError(f"Snapshot time {t} is not on the time lattice of step {grid.dt}.")
        steps.append(k)
    return steps


def solve_forward(
    grid: DomainGrid,
    medium: MediumSpec,
    f: np.ndarray,
    snapshot_times: Iterable[float] = (),
    impulsive: bool = False,
) -> tuple[np.ndarray, list[WaveSnapshot]]:
    """
    Solve the Robin problem for one boundary source.

    :param grid: the grid
    :param medium: the medium
    :param f: boundary signal on [0, 2T]
    :param snapshot_times: lattice times at which interior snapshots are returned
    :param impulsive: mollify the source with three-sample triangular smoothing first
    :returns: boundary trace of u on [0, 2T] and the requested snapshots
    """
    times = list(snapshot_times)
    steps = snapshot_steps_for(grid, times)
    source = mollify(f) if impulsive else np.asarray(f, dtype=float)
    output = WaveSolver(grid, medium).solve(source[None], snapshot_steps=steps)
    snapshots = [WaveSnapshot(values=output.snapshots[k][0], time=k * grid.dt) for k in steps]
    return output.traces[0], snapshots


def final_state(grid: DomainGrid, medium: MediumSpec, f: np.ndarray) -> np.ndarray:
    """u^f(T) for one source or a batch of sources."""
    f = np.asarray(f, dtype=float)
    batch = f[None] if f.ndim == 2 else f
    states = WaveSolver(grid, medium).solve(batch, snapshot_steps=[grid.n_half]).snapshots[grid.n_half]
    return states[0] if f.ndim == 2 else states


def second_time_derivative(grid: DomainGrid, f: np.ndarray) -> np.ndarray:
    """Central second difference in time with zero padding at both ends."""
    padded = np.pad(np.asarray(f, dtype=float), [(0, 0)] * (f.ndim - 1) + [(1, 1)])
    return (padded[..., 2:] - 2.0 * padded[..., 1:-1] + padded[..., :-2]) / grid.dt**2


def solve_source_timederiv(
    grid: DomainGrid,
    medium: MediumSpec,
    f: np.ndarray,
    snapshot_times: Iterable[float] = (),
) -> list[WaveSnapshot]:
    """Snapshots of u^(f_tt), which equal the second time derivative of u^f."""
    _, snapshots = solve_forward(grid, medium, second_time_derivative(grid, f), snapshot_times)
    return snapshots


def inner_product_volume(
    grid: DomainGrid,
    medium: MediumSpec,
    w1: WaveSnapshot | np.ndarray,
    w2: WaveSnapshot | np.ndarray,
) -> float:
    """L2(M, dV) inner product with the trapezoid weights c^-m h^m (halved per boundary axis)."""
    v1 = w1.values if isinstance(w1, WaveSnapshot) else np.asarray(w1)
    v2 = w2.values if isinstance(w2, WaveSnapshot) else np.asarray(w2)
    if v1.shape[-1] != grid.n_nodes or v2.shape[-1] != grid.n_nodes:
        raise GridValidationError("Snapshots must live on the grid nodes.")
    return np.sum(v1 * v2 * medium.volume_weights, axis=-1)


def energy_history(grid: DomainGrid, medium: MediumSpec, f: np.ndarray) -> np.ndarray:
    """Discrete energy at every half step n + 1/2 for one source."""
    return WaveSolver(grid, medium).solve(np.asarray(f, dtype=float)[None], track_energy=True).energy[0]
