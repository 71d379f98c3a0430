"""Exception hierarchy.

Every error carries the name of the module that raised it (``module``) so the
CLI can report provenance without parsing tracebacks.
"""


class ExitSpectrumError(Exception):
    """Base class for all library errors."""

    module = "exit_spectrum"


# generator
class GeneratorError(ExitSpectrumError):
    module = "generator"


class DetailedBalanceViolation(GeneratorError):
    def __init__(self, i, j, lhs, rhs):
        self.pair = (i, j)
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(
            f"detailed balance fails at states ({i}, {j}): "
            f"mu_i*L_ij = {lhs!r} but mu_j*L_ji = {rhs!r}"
        )


class NegativeOffDiagonal(GeneratorError):
    pass


class NonpositiveWeight(GeneratorError):
    pass


class NonFinitePotential(GeneratorError):
    pass


class AlphaOutOfRange(GeneratorError):
    pass


class SigmaNonpositive(GeneratorError):
    pass


class InvalidGrid(GeneratorError):
    pass


class DimensionMismatch(ExitSpectrumError):
    module = "killed_solver"


# killed_solver
class KilledSolverError(ExitSpectrumError):
    module = "killed_solver"


class EmptyDomain(KilledSolverError):
    pass


class SolveFailure(KilledSolverError):
    pass


class NotPositiveDefinite(SolveFailure):
    pass


# moments
class MomentsError(ExitSpectrumError):
    module = "moments"


class OverflowRisk(MomentsError):
    def __init__(self, k, message=None):
        self.k = k
        super().__init__(message or f"moment of order {k} overflows float64")


class OrderOutOfRange(MomentsError):
    pass


class DegenerateTrial(MomentsError):
    pass


# spectral
class SpectralError(ExitSpectrumError):
    module = "spectral"


class ConvergenceFailure(SpectralError):
    pass


class TooLargeForDense(SpectralError):
    pass


class BetaAtOrAboveLambda0(ExitSpectrumError):
    module = "spectral"


# bounds
class BoundsError(ExitSpectrumError):
    module = "bounds"


class NonpositiveMass(BoundsError):
    pass


class InsufficientOrders(BoundsError):
    pass


class InvalidDimension(BoundsError):
    pass


class DivergentTail(BoundsError):
    pass


class InvalidRange(BoundsError):
    pass


# montecarlo
class MonteCarloError(ExitSpectrumError):
    module = "montecarlo"


class NoKillingReachable(MonteCarloError):
    pass


class StepTooLarge(MonteCarloError):
    pass


class ConventionMismatch(MonteCarloError):
    pass


# cli_report
class ConfigParseError(ExitSpectrumError):
    module = "cli_report"


class ParseError(ExitSpectrumError):
    module = "cli_report"

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class DomainError(ExitSpectrumError):
    module = "cli_report"


class ExpressionOverflow(DomainError):
    pass
