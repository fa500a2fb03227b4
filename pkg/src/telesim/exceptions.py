"""Exception hierarchy shared across the package."""


class TelesimError(Exception):
    """Base class for all errors raised by telesim."""


class InvalidSpecError(TelesimError, ValueError):
    """A parameter set violates its documented invariants."""


class RigidVariantError(TelesimError):
    """Coupling torques were requested for the rigid transmission.

    The rigid rod is simulated as a kinematic constraint, so there is no
    coupling torque to compute.
    """


class ConstraintViolationError(TelesimError):
    """Two shafts that must coincide do not."""


class SimulationDiverged(TelesimError, ArithmeticError):
    """The integrator produced a non-finite state."""

    def __init__(self, tick, message=None):
        self.tick = tick
        super().__init__(message or f"non-finite state at tick {tick}")


class RankDeficientError(TelesimError, ArithmeticError):
    """The regressor matrix is rank deficient (input not exciting enough)."""


class UnstableFitError(TelesimError, ArithmeticError):
    """The identified discrete model has poles on or outside the unit circle."""


class ConstantSignalError(TelesimError, ValueError):
    """A goodness-of-fit statistic was requested for a constant signal."""


class DegenerateSampleError(TelesimError, ValueError):
    """Too few samples for the number of estimated parameters."""


class InsufficientReversalsError(TelesimError, ValueError):
    """A staircase threshold needs more reversals than were recorded."""


class DegenerateFitError(TelesimError, ArithmeticError):
    """Psychometric data are perfectly separated.

    The maximum-likelihood slope collapses to zero. The clamped fit is kept on
    the ``fit`` attribute so callers can still inspect it.
    """

    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


class ConfigError(TelesimError, ValueError):
    """A configuration file could not be parsed or validated."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
