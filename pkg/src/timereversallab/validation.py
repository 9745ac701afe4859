"""
Interior access to the waves u^f(T).

Reconstructions never import this module; it backs the checks that compare boundary-data results with what actually
happens inside the domain.
"""

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .boundary_ops import ProjectorSpec, boundary_norm
from .medium import DomainGrid, MediumSpec, domain_of_influence
from .wave_solver import WaveSolver, inner_product_volume

BATCH_SIZE = 64


class ValidationSolver:
    """Solver-backed view of final states, volume inner products and domains of influence."""

    grid: DomainGrid
    medium: MediumSpec

    def __init__(self, grid: DomainGrid, medium: MediumSpec):
        self.grid = grid
        self.medium = medium
        self._solver = WaveSolver(grid, medium)

    def final_states(self, signals: np.ndarray) -> np.ndarray:
        """u^f(T) for a single signal or a batch of signals."""
        signals = np.asarray(signals, dtype=float)
        batch = signals[None] if signals.ndim == 2 else signals
        states = []
        for start in range(0, len(batch), BATCH_SIZE):
            output = self._solver.solve(batch[start : start + BATCH_SIZE], snapshot_steps=[self.grid.n_half])
            states.append(output.snapshots[self.grid.n_half])
        stacked = np.concatenate(states, axis=0)
        return stacked[0] if signals.ndim == 2 else stacked

    def volume_inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return inner_product_volume(self.grid, self.medium, u, v)

    def volume_norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(self.volume_inner(u, u), 0.0)))

    def gram(self, f: np.ndarray, h: np.ndarray) -> float:
        """<u^f(T), u^h(T)> in L2(M, dV)."""
        states = self.final_states(np.stack([f, h]))
        return float(self.volume_inner(states[0], states[1]))

    def influence_mask(self, projector: ProjectorSpec) -> np.ndarray:
        """Node indicator of N = U_j M(Gamma_j, T_j)."""
        mask = np.zeros(self.grid.n_nodes, dtype=bool)
        for gamma, t_j in projector.windows:
            mask |= domain_of_influence(self.grid, self.medium, gamma, t_j)
        return mask

    def control_error(self, h: np.ndarray, f: np.ndarray, projector: ProjectorSpec) -> float:
        """|u^h(T) - chi_N u^f(T)| / |u^f(T)|."""
        states = self.final_states(np.stack([h, f]))
        target = np.where(self.influence_mask(projector), states[1], 0.0)
        reference = self.volume_norm(states[1])
        return self.volume_norm(states[0] - target) / reference if reference > 0 else 0.0

    def tikhonov_functional(self, f: np.ndarray, h: np.ndarray, alpha: float) -> float:
        """|u^f(T) - u^h(T)|^2 + alpha |h|^2."""
        states = self.final_states(np.stack([f, h]))
        return self.volume_norm(states[0] - states[1]) ** 2 + alpha * float(boundary_norm(self.grid, h)) ** 2

    def point_value(self, u: np.ndarray, point: np.ndarray) -> float:
        """Linear interpolation of a node field at a point."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if self.grid.dimension == 1:
            return float(np.interp(point[0], self.grid.axes[0], u))
        interpolator = RegularGridInterpolator(self.grid.axes, u.reshape(self.grid.shape))
        return float(interpolator(point[None, :])[0])
