"""Exceptions raised by the laboratory; the command line maps them onto exit codes."""


class LaboratoryError(Exception):
    """Base class of all laboratory errors."""


class GridValidationError(LaboratoryError, ValueError):
    """Invalid domain, grid, medium or lattice input."""


class NumericalFailure(LaboratoryError):
    """A numerical routine could not produce a trustworthy result."""


class SolverInstabilityError(NumericalFailure):
    """The explicit time stepping blew up."""

    def __init__(self, message: str, step: int, courant_number: float):
        """
        Store the step at which the blow-up was detected and the effective Courant number.

        :param message: human readable diagnostic
        :param step: time step index at which the field norm exceeded the bound
        :param courant_number: c_max * dt / h of the failing run
        """
        super().__init__(message)
        self.step = step
        self.courant_number = courant_number


class OversizeLatticeError(NumericalFailure):
    """The boundary-time lattice is too large for a dense operator."""


class ConjugateGradientBreakdown(NumericalFailure):
    """Non-positive curvature encountered, the operator is not positive definite."""


class GeodesicExitError(NumericalFailure):
    """A normal geodesic left the domain before reaching the requested arclength."""


class EmptySlabError(NumericalFailure):
    """The slab between two domains of influence contains no grid node."""
