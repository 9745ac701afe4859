"""
Measurement oracles for the response operator L_2T and the boundary-data operators built on top of them.

An oracle only ever returns boundary traces. The connecting operator K = sign * (R L R J - J L) turns two oracle
queries into the Gram form <u^f(T), u^h(T)> of the final states, which is how interior inner products are evaluated
from boundary data alone.
"""

import threading
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .boundary_ops import (
    FilterConvention,
    FilterVariant,
    ProjectorSpec,
    boundary_norm,
    canonical_conventions,
    correlate,
    inner_product_boundary,
    project,
    time_filter,
    time_reverse,
)
from .exceptions import GridValidationError, NumericalFailure, OversizeLatticeError
from .field_io import QueryLog
from .logging_helper import get_logger
from .medium import DomainGrid, MediumSpec
from .wave_solver import WaveSolver

logger = get_logger(__name__)

AvailableFlavors = Literal["ideal", "cached", "noisy"]

MAX_CACHED_DOF = 8192
SOLVE_BATCH_SIZE = 256


class MeasurementOracle:
    """Black-box access to L_2T; counts every signal it answers."""

    flavor: AvailableFlavors
    grid: DomainGrid
    query_count: int
    query_log: QueryLog | None

    def __init__(self, grid: DomainGrid, query_log: QueryLog | None = None):
        """
        Initialize the query accounting.

        :param grid: grid whose boundary-time lattice the oracle works on
        :param query_log: optional log receiving one entry per answered signal
        """
        self.grid = grid
        self.query_count = 0
        self.query_log = query_log
        self._count_lock = threading.Lock()

    def apply(self, f: np.ndarray) -> np.ndarray:
        """
        Return the boundary traces for one signal or a batch of signals.

        :param f: signal (n_boundary, 2N+1) or batch (batch, n_boundary, 2N+1)
        :returns: traces with the shape of f
        """
        f = np.asarray(f, dtype=float)
        batch = f[None] if f.ndim == 2 else f
        if batch.shape[1:] != self.grid.signal_shape:
            raise GridValidationError(f"Signal shape {batch.shape[1:]} does not match {self.grid.signal_shape}.")
        with self._count_lock:
            first = self.query_count
            self.query_count += len(batch)
        responses = self._respond(batch, first)
        if self.query_log is not None:
            for offset, (signal, response) in enumerate(zip(batch, responses)):
                self.query_log.record(
                    first + offset, boundary_norm(self.grid, signal), boundary_norm(self.grid, response)
                )
        return responses[0] if f.ndim == 2 else responses

    def _respond(self, batch: np.ndarray, first_index: int) -> np.ndarray:
        """
        Answer a batch of queries.

        :param batch: signals of shape (batch, n_boundary, 2N+1)
        :param first_index: query index of the first signal in the batch
        :returns: traces of the same shape
        """
        raise NotImplementedError


class IdealOracle(MeasurementOracle):
    """Oracle answering every query with a fresh forward solve."""

    flavor: AvailableFlavors = "ideal"

    def __init__(self, grid: DomainGrid, medium: MediumSpec, query_log: QueryLog | None = None):
        super().__init__(grid, query_log)
        self._solver = WaveSolver(grid, medium)

    def _respond(self, batch: np.ndarray, first_index: int) -> np.ndarray:
        traces = [
            self._solver.solve(batch[start : start + SOLVE_BATCH_SIZE]).traces
            for start in range(0, len(batch), SOLVE_BATCH_SIZE)
        ]
        return np.concatenate(traces, axis=0)


class CachedOracle(MeasurementOracle):
    """Oracle backed by the dense matrix of L_2T on the flattened boundary-time lattice."""

    flavor: AvailableFlavors = "cached"
    matrix: np.ndarray

    def __init__(self, grid: DomainGrid, matrix: np.ndarray, query_log: QueryLog | None = None):
        super().__init__(grid, query_log)
        dof = grid.n_boundary * grid.n_samples
        if matrix.shape != (dof, dof):
            raise GridValidationError(f"Operator of shape {matrix.shape} does not fit a lattice with {dof} samples.")
        self.matrix = matrix

    def _respond(self, batch: np.ndarray, first_index: int) -> np.ndarray:
        flat = batch.reshape(len(batch), -1)
        return (flat @ self.matrix.T).reshape(batch.shape)


@dataclass(frozen=True)
class NoiseCovarianceSpec:
    """Gaussian noise with separable Gaussian correlation in time and boundary arclength."""

    sigma: float
    correlation_time: float
    correlation_length: float

    def __post_init__(self):
        if self.sigma < 0:
            raise GridValidationError(f"Noise amplitude must be non-negative, got {self.sigma}.")
        if self.correlation_time <= 0 or self.correlation_length <= 0:
            raise GridValidationError("Noise correlation lengths must be positive; white noise is not admissible.")


class NoisyOracle(MeasurementOracle):
    """
    Wraps another oracle and adds a fresh correlated noise draw to every answer.

    The k-th answered signal uses the generator seeded with (seed, k), and queries are serialized, so a fixed seed
    reproduces the same noise sequence.
    """

    flavor: AvailableFlavors = "noisy"
    wrapped: MeasurementOracle
    noise: NoiseCovarianceSpec
    seed: int

    def __init__(
        self,
        wrapped: MeasurementOracle,
        noise: NoiseCovarianceSpec,
        seed: int,
        query_log: QueryLog | None = None,
    ):
        super().__init__(wrapped.grid, query_log)
        self.wrapped = wrapped
        self.noise = noise
        self.seed = int(seed)
        self._query_lock = threading.Lock()

    def apply(self, f: np.ndarray) -> np.ndarray:
        with self._query_lock:
            return super().apply(f)

    def draw(self, index: int) -> np.ndarray:
        """Noise realization of query `index`."""
        rng = np.random.default_rng([self.seed, index])
        white = rng.standard_normal(self.grid.signal_shape)
        correlated = correlate(self.grid, white, self.noise.correlation_time, self.noise.correlation_length)
        return self.noise.sigma * correlated

    def _respond(self, batch: np.ndarray, first_index: int) -> np.ndarray:
        clean = self.wrapped.apply(batch)
        noise = np.stack([self.draw(first_index + offset) for offset in range(len(batch))])
        logger.debug(f"Noisy queries {first_index}..{first_index + len(batch) - 1}")
        return clean + noise


def lambda_apply(oracle: MeasurementOracle, f: np.ndarray) -> np.ndarray:
    """One query of the response operator."""
    return oracle.apply(f)


def _as_convention(convention: FilterConvention | FilterVariant | str) -> FilterConvention:
    if isinstance(convention, FilterConvention):
        return convention
    return canonical_conventions[FilterVariant(convention)]


def raw_connecting_apply(oracle: MeasurementOracle, f: np.ndarray, variant: FilterVariant) -> np.ndarray:
    """R L R J f - J L f with exactly two queries per signal."""
    grid = oracle.grid
    f = np.asarray(f, dtype=float)
    batch = f[None] if f.ndim == 2 else f
    filtered = time_reverse(time_filter(grid, batch, variant))
    responses = oracle.apply(np.concatenate([batch, filtered], axis=0))
    direct, reversed_filtered = responses[: len(batch)], responses[len(batch) :]
    result = time_reverse(reversed_filtered) - time_filter(grid, direct, variant)
    return result[0] if f.ndim == 2 else result


def connecting_apply(
    oracle: MeasurementOracle,
    f: np.ndarray,
    convention: FilterConvention | FilterVariant | str = FilterVariant.INTRO,
) -> np.ndarray:
    """
    Apply the connecting operator K under a filter convention.

    :param oracle: measurement oracle
    :param f: signal or batch of signals
    :param convention: variant and sign; a bare variant uses its canonical sign
    :returns: Kf
    """
    convention = _as_convention(convention)
    return convention.sign * raw_connecting_apply(oracle, f, convention.variant)


def blago_inner_product(
    oracle: MeasurementOracle,
    f: np.ndarray,
    h: np.ndarray,
    convention: FilterConvention | FilterVariant | str = FilterVariant.INTRO,
) -> float:
    """<Kf, h> on the boundary, which equals <u^f(T), u^h(T)> in L2(M, dV)."""
    return float(inner_product_boundary(oracle.grid, connecting_apply(oracle, f, convention), h))


@dataclass
class ConventionCandidate:
    """Diagnostics of one filter variant during convention resolution."""

    variant: FilterVariant
    sign: int
    gram_values: list[float]
    positive: bool
    oracle_mismatch: float | None
    accepted: bool


@dataclass
class ConventionResolution:
    """Outcome of the convention resolution, recorded in every manifest."""

    convention: FilterConvention
    candidates: list[ConventionCandidate] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "variant": self.convention.variant.value,
            "sign": self.convention.sign,
            "candidates": [
                {
                    "variant": c.variant.value,
                    "sign": c.sign,
                    "positive": c.positive,
                    "oracle_mismatch": c.oracle_mismatch,
                    "accepted": c.accepted,
                }
                for c in self.candidates
            ],
        }


def resolve_convention(
    oracle: MeasurementOracle,
    probes: Sequence[np.ndarray],
    volume_gram: Callable[[np.ndarray, np.ndarray], float] | None = None,
    tolerance: float = 0.02,
) -> ConventionResolution:
    """
    Choose the filter variant and sign of K.

    For each variant the sign is fixed by positivity of <K p, p> on the probes; if a volume Gram oracle is given the
    variant must also reproduce <u^p(T), u^q(T)> on consecutive probe pairs within the relative tolerance. The INTRO
    variant wins a tie.

    :param oracle: measurement oracle
    :param probes: probe signals, at least two
    :param volume_gram: optional interior Gram oracle used only for validation
    :param tolerance: admissible relative mismatch against the Gram oracle
    :returns: resolved convention with per-variant diagnostics
    """
    if len(probes) < 2:
        raise GridValidationError("Convention resolution needs at least two probe signals.")
    grid = oracle.grid
    stacked = np.stack(probes)
    resolution_candidates = []
    for variant in (FilterVariant.INTRO, FilterVariant.SECTION2):
        responses = raw_connecting_apply(oracle, stacked, variant)
        gram_values = [float(inner_product_boundary(grid, r, p)) for r, p in zip(responses, stacked)]
        sign = 1 if sum(gram_values) >= 0 else -1
        norms = [float(boundary_norm(grid, p)) ** 2 for p in stacked]
        positive = all(sign * g >= -1e-6 * n for g, n in zip(gram_values, norms))
        mismatch = None
        if volume_gram is not None:
            errors = []
            for i in range(len(stacked) - 1):
                boundary_value = sign * float(inner_product_boundary(grid, responses[i], stacked[i + 1]))
                volume_value = volume_gram(stacked[i], stacked[i + 1])
                scale = np.sqrt(abs(gram_values[i] * gram_values[i + 1])) or 1.0
                errors.append(abs(boundary_value - volume_value) / scale)
            mismatch = float(max(errors))
        accepted = positive and (mismatch is None or mismatch <= tolerance)
        resolution_candidates.append(ConventionCandidate(variant, sign, gram_values, positive, mismatch, accepted))

    accepted = [c for c in resolution_candidates if c.accepted]
    if not accepted:
        raise NumericalFailure("No filter convention reproduces a positive Gram form on the probes.")
    chosen = accepted[0]
    logger.info(f"Resolved filter convention {chosen.variant.value} with sign {chosen.sign:+d}")
    return ConventionResolution(FilterConvention(chosen.variant, chosen.sign), resolution_candidates)


def assemble_cached(oracle_ideal: MeasurementOracle, batch_size: int = SOLVE_BATCH_SIZE) -> CachedOracle:
    """
    Assemble the dense matrix of L_2T by querying unit impulses at every lattice site.

    :param oracle_ideal: oracle answering the impulse queries
    :param batch_size: impulses per query batch
    :returns: cached oracle
    """
    grid = oracle_ideal.grid
    dof = grid.n_boundary * grid.n_samples
    if dof > MAX_CACHED_DOF:
        raise OversizeLatticeError(f"Lattice has {dof} samples, dense operators are limited to {MAX_CACHED_DOF}.")
    logger.info(f"Assembling dense response operator with {dof} columns")
    matrix = np.empty((dof, dof))
    for start in range(0, dof, batch_size):
        stop = min(start + batch_size, dof)
        impulses = np.zeros((stop - start, dof))
        impulses[np.arange(stop - start), np.arange(start, stop)] = 1.0
        responses = oracle_ideal.apply(impulses.reshape(-1, *grid.signal_shape))
        matrix[:, start:stop] = responses.reshape(stop - start, dof).T
    return CachedOracle(grid, matrix)


def _apply_to_columns(grid: DomainGrid, operation: Callable[[np.ndarray], np.ndarray], matrix: np.ndarray):
    columns = matrix.T.reshape(-1, *grid.signal_shape)
    return operation(columns).reshape(matrix.shape[1], -1).T


def assemble_connecting_matrix(
    cached: CachedOracle,
    convention: FilterConvention | FilterVariant | str = FilterVariant.INTRO,
) -> np.ndarray:
    """Dense matrix of K on the flattened lattice, computed without issuing queries."""
    convention = _as_convention(convention)
    grid = cached.grid
    response = cached.matrix
    identity = np.eye(response.shape[0])
    filter_matrix = _apply_to_columns(grid, lambda s: time_filter(grid, s, convention.variant), identity)
    reverse_matrix = _apply_to_columns(grid, time_reverse, identity)
    forward = reverse_matrix @ response @ reverse_matrix @ filter_matrix
    backward = filter_matrix @ response
    return convention.sign * (forward - backward)


@dataclass(frozen=True)
class PowerEstimate:
    """Power-method estimate of |PKP| and its last relative change."""

    estimate: float
    relative_change: float
    iterations: int


def estimate_pkp_norm(
    oracle: MeasurementOracle,
    projector: ProjectorSpec | np.ndarray,
    n_iter: int = 16,
    convention: FilterConvention | FilterVariant | str = FilterVariant.INTRO,
    seed: int = 0,
) -> PowerEstimate:
    """
    Estimate the largest eigenvalue of P K P in the boundary inner product by power iteration.

    :param oracle: measurement oracle, two queries per step
    :param projector: the set B
    :param n_iter: number of power steps, at least 8
    :param convention: filter convention of K
    :param seed: seed of the random start vector
    :returns: Rayleigh-quotient estimate and its last-step relative change
    """
    if n_iter < 8:
        raise GridValidationError(f"The power method needs at least 8 steps, got {n_iter}.")
    grid = oracle.grid
    mask = projector.mask(grid) if isinstance(projector, ProjectorSpec) else projector
    if not mask.any():
        return PowerEstimate(0.0, 0.0, 0)

    vector = project(grid, np.random.default_rng(seed).standard_normal(grid.signal_shape), mask)
    vector /= boundary_norm(grid, vector)
    estimate, previous = 0.0, 0.0
    for step in range(n_iter):
        image = project(grid, connecting_apply(oracle, vector, convention), mask)
        previous, estimate = estimate, float(inner_product_boundary(grid, image, vector))
        norm = float(boundary_norm(grid, image))
        if norm == 0.0:
            return PowerEstimate(0.0, 0.0, step + 1)
        vector = image / norm
    change = abs(estimate - previous) / abs(estimate) if estimate != 0 else 0.0
    logger.debug(f"|PKP| estimate {estimate:.5g} after {n_iter} power steps (last change {change:.2e})")
    return PowerEstimate(estimate, change, n_iter)
