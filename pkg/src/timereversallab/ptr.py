"""
Processed time reversal: solving (P K P + alpha) h = P K f with boundary measurements only.

The fixed-point iteration only ever calls the measurement oracle through `connecting_apply`, two queries per step. The
conjugate gradient solver and the dense solve answer the same equation and are used to cross-check it.
"""

from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
import scipy.linalg

from .boundary_ops import (
    FilterConvention,
    FilterVariant,
    ProjectorSpec,
    boundary_norm,
    canonical_conventions,
    inner_product_boundary,
    project,
)
from .exceptions import ConjugateGradientBreakdown, GridValidationError
from .logging_helper import get_logger
from .measurement import (
    CachedOracle,
    MeasurementOracle,
    NoisyOracle,
    assemble_connecting_matrix,
    connecting_apply,
    estimate_pkp_norm,
)
from .validation import ValidationSolver

logger = get_logger(__name__)

AvailableSolvers = Literal["ptr", "cg"]

OMEGA_SAFETY_FACTOR = 2.2
LOG_INTERVAL = 100


@dataclass
class IterationConfig:
    """Parameters of one regularized control solve."""

    alpha: float
    omega: float | Literal["auto"] = "auto"
    n_max: int | None = None
    tol_fp: float = 1e-6
    convention: FilterConvention = field(default_factory=lambda: canonical_conventions[FilterVariant.INTRO])
    solver: AvailableSolvers = "ptr"
    warm_start: np.ndarray | None = None
    power_iterations: int = 16
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise GridValidationError(f"The regularization parameter must lie in (0, 1), got {self.alpha}.")
        if self.omega != "auto" and not float(self.omega) > 0:
            raise GridValidationError(f"omega must be positive or 'auto', got {self.omega}.")
        if self.n_max is not None and self.n_max < 1:
            raise GridValidationError(f"n_max must be positive, got {self.n_max}.")
        if not self.tol_fp > 0:
            raise GridValidationError(f"The fixed-point tolerance must be positive, got {self.tol_fp}.")
        if self.solver not in ("ptr", "cg"):
            raise GridValidationError(f"Unknown solver {self.solver}.")

    def with_alpha(self, alpha: float, warm_start: np.ndarray | None = None) -> "IterationConfig":
        return IterationConfig(
            alpha=alpha,
            omega=self.omega,
            n_max=self.n_max,
            tol_fp=self.tol_fp,
            convention=self.convention,
            solver=self.solver,
            warm_start=warm_start,
            power_iterations=self.power_iterations,
            seed=self.seed,
        )


@dataclass(eq=False)
class IterationResult:
    """Final iterate of a control solve together with its convergence record."""

    h: np.ndarray
    increments: list[float]
    query_count: int
    omega: float | None
    converged: bool
    residual: float = 0.0
    rate: float | None = None
    solver: AvailableSolvers = "ptr"

    @property
    def steps(self) -> int:
        return len(self.increments)


def _mask_of(grid, projector: ProjectorSpec | np.ndarray) -> np.ndarray:
    return projector.mask(grid) if isinstance(projector, ProjectorSpec) else np.asarray(projector, dtype=bool)


def resolve_omega(oracle: MeasurementOracle, mask: np.ndarray, config: IterationConfig) -> float:
    """The relaxation parameter, estimating |PKP| by the power method for omega = 'auto'."""
    if config.omega != "auto":
        return float(config.omega)
    estimate = estimate_pkp_norm(oracle, mask, config.power_iterations, config.convention, config.seed)
    omega = OMEGA_SAFETY_FACTOR * (1.0 + abs(estimate.estimate))
    logger.debug(f"Auto omega {omega:.5g} from |PKP| ~ {estimate.estimate:.5g}")
    return omega


def _normal_residual(oracle, h, target, mask, alpha, convention) -> np.ndarray:
    """(P K P + alpha) h - P K f, where target = P K f."""
    return project(oracle.grid, connecting_apply(oracle, h, convention), mask) + alpha * h - target


def _estimated_rate(increments: Sequence[float]) -> float | None:
    tail = [value for value in increments[-20:] if value > 0]
    if len(tail) < 3:
        return None
    return float(np.exp(np.mean(np.diff(np.log(tail)))))


def ptr_iterate(
    oracle: MeasurementOracle,
    f: np.ndarray,
    projector: ProjectorSpec | np.ndarray,
    config: IterationConfig,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> IterationResult:
    """
    Run the processed time reversal iteration h_(n+1) = (1 - alpha/omega) h_n - (1/omega) P K h_n + F.

    The update is written as h_(n+1) = h_n - r_n / omega with the normal residual r_n = (PKP + alpha) h_n - PKf,
    which is the same recursion with F = (1/omega) P K f. Iteration stops once |h_(n+1) - h_n| <= tol_fp |F|.

    :param oracle: measurement oracle
    :param f: source whose restricted wave is targeted
    :param projector: the set B
    :param config: iteration parameters
    :param callback: called with (n, h_n) after every step
    :returns: final iterate, increment history and query accounting
    """
    grid = oracle.grid
    first_query = oracle.query_count
    mask = _mask_of(grid, projector)
    convention = config.convention

    target = project(grid, connecting_apply(oracle, f, convention), mask)
    target_norm = float(boundary_norm(grid, target))
    h = np.zeros(grid.signal_shape) if config.warm_start is None else project(grid, config.warm_start, mask)
    if target_norm == 0.0 and not h.any():
        logger.debug("Zero right-hand side, the control is zero")
        return IterationResult(h, [], oracle.query_count - first_query, None, True)

    omega = resolve_omega(oracle, mask, config)
    n_max = config.n_max or int(np.ceil(10.0 * omega / config.alpha))
    threshold = config.tol_fp * target_norm / omega

    increments: list[float] = []
    converged = False
    for n in range(n_max):
        residual = _normal_residual(oracle, h, target, mask, config.alpha, convention)
        step = residual / omega
        h = h - step
        increments.append(float(boundary_norm(grid, step)))
        if callback is not None:
            callback(n + 1, h)
        if n % LOG_INTERVAL == 0:
            logger.debug(f"PTR step {n + 1}: |h_(n+1) - h_n| = {increments[-1]:.3e}")
        if increments[-1] <= threshold:
            converged = True
            break

    final = _normal_residual(oracle, h, target, mask, config.alpha, convention)
    relative_residual = float(boundary_norm(grid, final)) / target_norm if target_norm > 0 else 0.0
    result = IterationResult(
        h=project(grid, h, mask),
        increments=increments,
        query_count=oracle.query_count - first_query,
        omega=omega,
        converged=converged,
        residual=relative_residual,
        rate=_estimated_rate(increments),
        solver="ptr",
    )
    if not converged:
        logger.warning(
            f"PTR did not converge within {n_max} steps (alpha={config.alpha:g}, omega={omega:.4g}); "
            f"last increment {increments[-1]:.3e}, relative residual {relative_residual:.3e}"
        )
    else:
        logger.info(
            f"PTR converged in {len(increments)} steps with {result.query_count} queries "
            f"(alpha={config.alpha:g}, relative residual {relative_residual:.2e})"
        )
    return result


def conjugate_gradient(
    oracle: MeasurementOracle,
    f: np.ndarray,
    projector: ProjectorSpec | np.ndarray,
    alpha: float,
    tol: float = 1e-8,
    convention: FilterConvention = canonical_conventions[FilterVariant.INTRO],
    warm_start: np.ndarray | None = None,
    max_steps: int | None = None,
) -> IterationResult:
    """
    Conjugate gradients for (P K P + alpha) h = P K f in the boundary inner product.

    :param oracle: measurement oracle, two queries per matrix-vector product
    :param f: source
    :param projector: the set B
    :param alpha: regularization parameter
    :param tol: relative residual at which the iteration stops
    :param convention: filter convention of K
    :param warm_start: optional initial iterate
    :param max_steps: step limit, the number of lattice samples in B by default
    :returns: solution with the residual history stored as increments
    """
    grid = oracle.grid
    first_query = oracle.query_count
    mask = _mask_of(grid, projector)

    def apply_normal(vector: np.ndarray) -> np.ndarray:
        return project(grid, connecting_apply(oracle, vector, convention), mask) + alpha * vector

    def inner(a: np.ndarray, b: np.ndarray) -> float:
        return float(inner_product_boundary(grid, a, b))

    rhs = project(grid, connecting_apply(oracle, f, convention), mask)
    rhs_norm = float(boundary_norm(grid, rhs))
    h = np.zeros(grid.signal_shape) if warm_start is None else project(grid, warm_start, mask)
    if rhs_norm == 0.0 and not h.any():
        return IterationResult(h, [], oracle.query_count - first_query, None, True, solver="cg")

    residual = rhs - apply_normal(h) if h.any() else rhs.copy()
    direction = residual.copy()
    rs_old = inner(residual, residual)
    history = [np.sqrt(rs_old)]
    max_steps = max_steps or max(int(mask.sum()), 1)
    converged = np.sqrt(rs_old) <= tol * rhs_norm

    for step in range(max_steps):
        if converged:
            break
        image = apply_normal(direction)
        curvature = inner(direction, image)
        if curvature <= alpha * inner(direction, direction) * 1e-3:
            raise ConjugateGradientBreakdown(
                f"Curvature {curvature:.3e} at CG step {step}: P K P + alpha is not positive, "
                "check the filter convention."
            )
        step_length = rs_old / curvature
        h = h + step_length * direction
        residual = residual - step_length * image
        rs_new = inner(residual, residual)
        history.append(np.sqrt(rs_new))
        converged = np.sqrt(rs_new) <= tol * rhs_norm
        direction = residual + (rs_new / rs_old) * direction
        rs_old = rs_new

    relative = history[-1] / rhs_norm if rhs_norm > 0 else 0.0
    result = IterationResult(
        h=project(grid, h, mask),
        increments=[float(value) for value in history[1:]],
        query_count=oracle.query_count - first_query,
        omega=None,
        converged=bool(converged),
        residual=float(relative),
        solver="cg",
    )
    if converged:
        logger.info(f"CG converged in {result.steps} steps with {result.query_count} queries (alpha={alpha:g})")
    else:
        logger.warning(f"CG stopped after {result.steps} steps at relative residual {relative:.3e}")
    return result


def cg_solve(
    oracle: MeasurementOracle,
    f: np.ndarray,
    projector: ProjectorSpec | np.ndarray,
    alpha: float,
    tol: float = 1e-8,
    convention: FilterConvention = canonical_conventions[FilterVariant.INTRO],
) -> np.ndarray:
    """Conjugate-gradient solution h of (P K P + alpha) h = P K f."""
    return conjugate_gradient(oracle, f, projector, alpha, tol, convention).h


def solve_control(
    oracle: MeasurementOracle,
    f: np.ndarray,
    projector: ProjectorSpec | np.ndarray,
    config: IterationConfig,
) -> IterationResult:
    """Solve for h(alpha) with the solver selected in the configuration."""
    if config.solver == "cg":
        return conjugate_gradient(
            oracle, f, projector, config.alpha, config.tol_fp, config.convention, warm_start=config.warm_start
        )
    return ptr_iterate(oracle, f, projector, config)


def dense_normal_solve(
    cached: CachedOracle,
    f: np.ndarray,
    projector: ProjectorSpec | np.ndarray,
    alpha: float,
    convention: FilterConvention = canonical_conventions[FilterVariant.INTRO],
) -> np.ndarray:
    """Direct solve of (P K P + alpha) h = P K f with the dense connecting matrix of a cached oracle."""
    grid = cached.grid
    keep = _mask_of(grid, projector).ravel().astype(float)
    connecting = assemble_connecting_matrix(cached, convention)
    normal = keep[:, None] * connecting * keep[None, :] + alpha * np.eye(len(keep))
    rhs = keep * (connecting @ np.asarray(f, dtype=float).ravel())
    return scipy.linalg.solve(normal, rhs).reshape(grid.signal_shape)


@dataclass(eq=False)
class ControlPathEntry:
    """One point of the alpha schedule."""

    alpha: float
    result: IterationResult
    control_error: float | None = None
    functional: float | None = None


@dataclass(eq=False)
class ControlPath:
    entries: list[ControlPathEntry] = field(default_factory=list)

    @property
    def alphas(self) -> list[float]:
        return [entry.alpha for entry in self.entries]

    @property
    def errors(self) -> list[float | None]:
        return [entry.control_error for entry in self.entries]

    @property
    def query_count(self) -> int:
        return sum(entry.result.query_count for entry in self.entries)

    def final(self) -> np.ndarray:
        return self.entries[-1].result.h


def control_limit(
    oracle: MeasurementOracle,
    f: np.ndarray,
    projector: ProjectorSpec,
    alpha_schedule: Sequence[float],
    config: IterationConfig,
    validator: ValidationSolver | None = None,
    continuation: bool = True,
) -> ControlPath:
    """
    Follow h(alpha) along a decreasing alpha schedule.

    With a validator the control error |u^h(T) - chi_N u^f(T)| / |u^f(T)| is recorded for every alpha; this uses
    interior fields and never feeds back into the solves.

    :param oracle: measurement oracle
    :param f: source
    :param projector: the set B
    :param alpha_schedule: strictly decreasing regularization parameters
    :param config: iteration parameters; its alpha is replaced by the schedule
    :param validator: optional interior solver for diagnostics
    :param continuation: warm start every solve at the previous h
    :returns: the control path
    """
    schedule = [float(a) for a in alpha_schedule]
    if not schedule:
        raise GridValidationError("The alpha schedule is empty.")
    if any(later >= earlier for earlier, later in zip(schedule, schedule[1:])):
        raise GridValidationError(f"The alpha schedule must be strictly decreasing, got {schedule}.")

    path = ControlPath()
    previous = None
    for alpha in schedule:
        result = solve_control(oracle, f, projector, config.with_alpha(alpha, previous if continuation else None))
        entry = ControlPathEntry(alpha=alpha, result=result)
        if validator is not None:
            entry.control_error = validator.control_error(result.h, f, projector)
            entry.functional = validator.tikhonov_functional(f, result.h, alpha)
            logger.info(f"alpha={alpha:.1e}: control error {entry.control_error:.4f}")
        path.entries.append(entry)
        previous = result.h
    return path


def functional_decomposition(
    validator: ValidationSolver,
    f: np.ndarray,
    h: np.ndarray,
    projector: ProjectorSpec,
    alpha: float,
) -> tuple[float, float]:
    """
    Both sides of F(h) = |(1 - chi_N) u^f(T)|^2 + |chi_N (u^(Ph)(T) - u^f(T))|^2 + alpha |h|^2.

    :returns: the functional evaluated directly and through the decomposition
    """
    grid = validator.grid
    ph = project(grid, h, projector)
    states = validator.final_states(np.stack([f, ph]))
    inside = validator.influence_mask(projector)
    penalty = alpha * float(boundary_norm(grid, ph)) ** 2
    direct = validator.volume_norm(states[0] - states[1]) ** 2 + penalty
    outside_part = validator.volume_norm(np.where(inside, 0.0, states[0])) ** 2
    inside_part = validator.volume_norm(np.where(inside, states[1] - states[0], 0.0)) ** 2
    return direct, outside_part + inside_part + penalty


@dataclass(eq=False)
class AveragedIterate:
    """Running averages of the noisy iteration."""

    average: np.ndarray
    checkpoints: dict[int, np.ndarray]
    query_count: int
    omega: float


def averaged_noisy_iterate(
    noisy_oracle: NoisyOracle,
    f: np.ndarray,
    projector: ProjectorSpec | np.ndarray,
    config: IterationConfig,
    k_avg: int,
    checkpoints: Sequence[int] = (),
) -> AveragedIterate:
    """
    Average the iterates of the PTR recursion driven by noisy measurements.

    Each step evaluates h <- h - (1/omega)(alpha h + P K_noisy (h - f)) with two fresh noisy queries, so the noise
    enters as P J e1 - P R e2 and averages out at the rate K^(-1/2). `config.warm_start` may hold h(alpha) to isolate
    the noise term from the deterministic transient.

    :param noisy_oracle: oracle adding fresh noise to every query
    :param f: source
    :param projector: the set B
    :param config: iteration parameters; omega must be positive or 'auto'
    :param k_avg: number of averaged iterates
    :param checkpoints: K values at which the running average is kept
    :returns: the average of h_1..h_K and the requested running averages
    """
    if k_avg < 1:
        raise GridValidationError(f"At least one iterate must be averaged, got {k_avg}.")
    grid = noisy_oracle.grid
    first_query = noisy_oracle.query_count
    mask = _mask_of(grid, projector)
    omega = resolve_omega(noisy_oracle, mask, config)
    wanted = {int(k) for k in checkpoints if 1 <= k <= k_avg}

    h = np.zeros(grid.signal_shape) if config.warm_start is None else project(grid, config.warm_start, mask)
    total = np.zeros(grid.signal_shape)
    kept: dict[int, np.ndarray] = {}
    for k in range(1, k_avg + 1):
        image = project(grid, connecting_apply(noisy_oracle, h - f, config.convention), mask)
        h = h - (config.alpha * h + image) / omega
        total += h
        if k in wanted:
            kept[k] = total / k
    logger.info(f"Averaged {k_avg} noisy iterates with {noisy_oracle.query_count - first_query} queries")
    return AveragedIterate(total / k_avg, kept, noisy_oracle.query_count - first_query, omega)
