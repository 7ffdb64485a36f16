"""Exception hierarchy.

Errors split in two families that the CLI maps to exit codes: validation
problems (bad input, inadmissible surface) and numerical problems (the
computation itself failed or left its regime of validity).
"""


class BlowupControlError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ValidationError(BlowupControlError):
    exit_code = 1


class NumericalError(BlowupControlError):
    exit_code = 2


class AssumptionViolation(ValidationError):
    """Surface breaks sup|grad psi| < 1 or sup|psi| < 1."""


class ShapeViolation(ValidationError):
    """psi takes positive values where a nonpositive surface is required."""


class DegenerateSurface(ValidationError):
    """gamma = 1 - |grad psi|^2 dropped below the configured floor."""


class SliceThroughSingularity(ValidationError):
    pass


class SingularTime(ValidationError):
    pass


class NullSpaceViolation(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


class TrajectoryTooShort(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class CFLViolation(NumericalError):
    pass


class ResonanceMismatch(NumericalError):
    """Nonzero balance left at a degenerate order with no log slot to absorb it."""


class BlowupInReducedSystem(NumericalError):
    pass


class StepCollapse(NumericalError):
    pass


class ImmediateOverflow(NumericalError):
    pass


class FitFailure(NumericalError):
    pass


class BlowupReachedBoundary(NumericalError):
    pass
