"""
Operators on boundary signals: time reversal R, time filter J, projectors P_B and the boundary inner product.

A boundary signal is an array of shape (n_boundary, 2N+1) holding values on the boundary nodes (in boundary
position order) at the times t_k = k dt. All operators accept a leading batch axis.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np
from scipy.ndimage import convolve1d, gaussian_filter

from .exceptions import GridValidationError
from .medium import DomainGrid


class FilterVariant(str, Enum):
    """Domain of the time filter kernel."""

    # s below min(t, 2T - t)
    INTRO = "intro"
    # s above t and s + t below 2T
    SECTION2 = "section2"


@dataclass(frozen=True)
class FilterConvention:
    """Filter variant together with the sign which turns P(R L R J - J L) into a positive operator."""

    variant: FilterVariant = FilterVariant.INTRO
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise GridValidationError(f"A filter convention sign must be +1 or -1, got {self.sign}.")

    def __str__(self) -> str:
        return f"{self.variant.value}{'+' if self.sign > 0 else '-'}"


# Convention which makes the connecting operator positive for each variant
canonical_conventions: dict[FilterVariant, FilterConvention] = {
    FilterVariant.INTRO: FilterConvention(FilterVariant.INTRO, 1),
    FilterVariant.SECTION2: FilterConvention(FilterVariant.SECTION2, -1),
}


@dataclass(frozen=True)
class ProjectorSpec:
    """Union of boundary patch x time window sets, B = U_j Gamma_j x [T - T_j, T]."""

    windows: tuple[tuple[tuple[int, ...], float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        for gamma, t_j in self.windows:
            if len(gamma) == 0:
                raise GridValidationError("Every boundary patch of a projector must contain at least one node.")
            if t_j < 0:
                raise GridValidationError(f"Projector window lengths must be non-negative, got {t_j}.")

    @classmethod
    def from_windows(cls, windows: Iterable[tuple[Iterable[int], float]]) -> "ProjectorSpec":
        return cls(tuple((tuple(int(b) for b in gamma), float(t_j)) for gamma, t_j in windows))

    @classmethod
    def full_boundary(cls, grid: DomainGrid, t_j: float) -> "ProjectorSpec":
        """The set dM x [T - t_j, T]."""
        return cls.from_windows([(range(grid.n_boundary), t_j)])

    @property
    def is_empty(self) -> bool:
        return len(self.windows) == 0

    def union(self, *others: "ProjectorSpec") -> "ProjectorSpec":
        windows = list(self.windows)
        for other in others:
            windows.extend(other.windows)
        return ProjectorSpec(tuple(windows))

    def mask(self, grid: DomainGrid) -> np.ndarray:
        """Boolean indicator of B on the boundary-time lattice."""
        indicator = np.zeros(grid.signal_shape, dtype=bool)
        horizon = grid.horizon_T
        for gamma, t_j in self.windows:
            if t_j > horizon * (1 + 1e-9):
                raise GridValidationError(f"Projector window {t_j} exceeds the horizon T={horizon}.")
            if max(gamma) >= grid.n_boundary or min(gamma) < 0:
                raise GridValidationError(f"Projector patch {gamma} refers to unknown boundary positions.")
            first = int(np.ceil((horizon - t_j) / grid.dt - 1e-9))
            indicator[np.asarray(gamma)[:, None], np.arange(max(first, 0), grid.n_half + 1)[None, :]] = True
        return indicator


def time_reverse(f: np.ndarray) -> np.ndarray:
    """Rf(t) = f(2T - t)."""
    return np.ascontiguousarray(np.asarray(f)[..., ::-1])


def time_weights(grid: DomainGrid) -> np.ndarray:
    """Trapezoid weights of the time lattice on [0, 2T]: dt inside, dt/2 at both ends."""
    weights = np.full(grid.n_samples, grid.dt)
    weights[[0, -1]] *= 0.5
    return weights


def _parity_cumsum(f: np.ndarray) -> np.ndarray:
    """Running sums over samples of equal parity, C[k] = f[k] + f[k-2] + ..."""
    sums = np.empty_like(f)
    sums[..., 0::2] = np.cumsum(f[..., 0::2], axis=-1)
    sums[..., 1::2] = np.cumsum(f[..., 1::2], axis=-1)
    return sums


def time_filter(grid: DomainGrid, f: np.ndarray, variant: FilterVariant) -> np.ndarray:
    """
    Apply the time filter J.

    The lattice kernel is the checkerboard quadrature of one half times the indicator of the variant's triangle: the
    INTRO variant sums samples n <= k(m) with n = k(m) mod 2, where k(m) = N - 1 - |m - N|; SECTION2 is its transpose.
    The sample at t = 0 carries half weight, as in the trapezoid rule and the Taylor start of the leapfrog scheme.
    These are the weights for which the leapfrog scheme reproduces interior inner products exactly.

    :param grid: the grid (time lattice)
    :param f: boundary signal or batch of signals
    :param variant: filter variant
    :returns: Jf
    """
    f = np.array(f, dtype=float)
    f[..., 0] *= 0.5
    n_half = grid.n_half
    sums = _parity_cumsum(f)
    filtered = np.zeros_like(f)
    if FilterVariant(variant) is FilterVariant.INTRO:
        m = np.arange(grid.n_samples)
        k = n_half - 1 - np.abs(m - n_half)
        valid = k >= 0
        filtered[..., valid] = sums[..., k[valid]]
    else:
        n = np.arange(n_half)
        filtered[..., :n_half] = sums[..., 2 * n_half - 1 - n]
        filtered[..., 1:n_half] -= sums[..., n[1:] - 1]
    return grid.dt * filtered


def project(grid: DomainGrid, f: np.ndarray, projector: ProjectorSpec | np.ndarray) -> np.ndarray:
    """P_B f = chi_B f; accepts a projector spec or a precomputed lattice mask."""
    mask = projector.mask(grid) if isinstance(projector, ProjectorSpec) else projector
    return np.where(mask, f, 0.0)


def inner_product_boundary(grid: DomainGrid, f: np.ndarray, h: np.ndarray) -> float | np.ndarray:
    """Sum of f h dS_g dt over the boundary-time lattice, trapezoid rule in time."""
    weights = grid.surface_weights[:, None] * time_weights(grid)[None, :]
    return np.sum(np.asarray(f) * np.asarray(h) * weights, axis=(-2, -1))


def boundary_norm(grid: DomainGrid, f: np.ndarray) -> float | np.ndarray:
    return np.sqrt(np.maximum(inner_product_boundary(grid, f, f), 0.0))


def boundary_patch(grid: DomainGrid, center: int, radius: float) -> tuple[int, ...]:
    """
    Boundary positions within boundary arclength `radius` of a centre node.

    In 1D every patch collapses to the centre node.
    """
    if grid.dimension == 1:
        return (int(center),)
    arclength = grid.boundary_arclength
    loop = grid.boundary_length
    separation = np.abs(arclength - arclength[center])
    separation = np.minimum(separation, loop - separation)
    return tuple(int(b) for b in np.flatnonzero(separation <= radius + 1e-9 * grid.h))


def mollify(f: np.ndarray) -> np.ndarray:
    """Three-sample triangular smoothing in time, used for impulsive sources."""
    return convolve1d(np.asarray(f, dtype=float), np.array([0.25, 0.5, 0.25]), axis=-1, mode="constant")


def correlate(
    grid: DomainGrid,
    white: np.ndarray,
    correlation_time: float,
    correlation_length: float | None = None,
) -> np.ndarray:
    """
    Filter lattice white noise with a separable Gaussian kernel and rescale to unit pointwise variance.

    The boundary axis wraps around the boundary loop in 2D and is left unfiltered in 1D.

    :param grid: the grid
    :param white: independent standard normal samples of signal shape (batch axes allowed)
    :param correlation_time: kernel width in time
    :param correlation_length: kernel width in boundary arclength (ignored in 1D)
    :returns: correlated samples with unit pointwise standard deviation
    """
    sigma_t = correlation_time / grid.dt
    sigma_x = 0.0 if grid.dimension == 1 or correlation_length is None else correlation_length / grid.h
    leading = (0.0,) * (white.ndim - 2)
    filtered = gaussian_filter(
        white,
        sigma=leading + (sigma_x, sigma_t),
        mode=("nearest",) * len(leading) + ("wrap", "reflect"),
        truncate=4.0,
    )
    extent = (2 * int(np.ceil(4 * sigma_x)) + 1, 2 * int(np.ceil(4 * sigma_t)) + 1)
    delta = np.zeros(extent)
    delta[extent[0] // 2, extent[1] // 2] = 1.0
    kernel = gaussian_filter(delta, sigma=(sigma_x, sigma_t), mode="constant", truncate=4.0)
    return filtered / np.sqrt(np.sum(kernel**2))


def smooth_random_signal(
    grid: DomainGrid,
    rng: np.random.Generator,
    correlation_time: float = 0.1,
    correlation_length: float | None = None,
    support: ProjectorSpec | np.ndarray | None = None,
    taper: float | None = None,
) -> np.ndarray:
    """
    Draw a smooth random boundary signal.

    :param grid: the grid
    :param rng: random generator
    :param correlation_time: temporal correlation width
    :param correlation_length: correlation width along the boundary (2D)
    :param support: optional projector restricting the support
    :param taper: if given, the signal is multiplied with a smooth ramp vanishing at t = 0 over this duration
    :returns: boundary signal with unit pointwise standard deviation
    """
    signal = correlate(grid, rng.standard_normal(grid.signal_shape), correlation_time, correlation_length)
    if taper:
        ramp = np.clip(grid.times / taper, 0.0, 1.0)
        signal = signal * np.sin(0.5 * np.pi * ramp) ** 2
    if support is not None:
        signal = project(grid, signal, support)
    return signal


def smooth_bump(
    grid: DomainGrid,
    t_start: float,
    t_end: float,
    positions: Iterable[int] | None = None,
    amplitude: float = 1.0,
) -> np.ndarray:
    """
    A sin^2 bump in time on [t_start, t_end], constant on the given boundary positions.

    :param grid: the grid
    :param t_start: start of the support
    :param t_end: end of the support
    :param positions: boundary positions carrying the bump, all by default
    :param amplitude: peak value
    :returns: boundary signal
    """
    if t_end <= t_start:
        raise GridValidationError(f"A bump needs t_end > t_start, got [{t_start}, {t_end}].")
    phase = np.clip((grid.times - t_start) / (t_end - t_start), 0.0, 1.0)
    profile = amplitude * np.sin(np.pi * phase) ** 2
    signal = np.zeros(grid.signal_shape)
    rows = np.arange(grid.n_boundary) if positions is None else np.asarray(list(positions), dtype=int)
    signal[rows, :] = profile
    return signal


def unit_area_pulse(grid: DomainGrid, position: int, center: float, half_width: float) -> np.ndarray:
    """A raised-cosine pulse of unit time integral at one boundary position."""
    offset = (grid.times - center) / half_width
    profile = np.where(np.abs(offset) < 1.0, np.cos(0.5 * np.pi * offset) ** 2, 0.0)
    signal = np.zeros(grid.signal_shape)
    signal[position] = profile / np.sum(profile * time_weights(grid))
    return signal
