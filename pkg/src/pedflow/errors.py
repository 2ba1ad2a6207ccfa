"""Exception types shared across the package."""


class PedflowError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PedflowError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class CongestionOverflowError(DomainError):
    """A density reached or exceeded the jam density: the state left the
    admissible region of the model (not a numerical round-off issue)."""


class VacuumError(DomainError):
    """Zero density paired with non-zero momentum: primitive variables
    cannot be recovered."""


class NonHyperbolicError(PedflowError):
    """Real characteristic speeds were requested at a state where the
    discriminant is negative."""


class StabilityError(PedflowError):
    """The combined advective + diffusive stability number exceeded the
    configured guard."""

    def __init__(self, measured: float, guard: float):
        self.measured = measured
        self.guard = guard
        super().__init__(
            f"stability number {measured:.6g} exceeds guard {guard:.6g}"
        )


class BlowUpError(PedflowError):
    """A state entry became non-finite during time stepping."""


class ClipBudgetError(PedflowError):
    """Cumulative mass removed by negative-density clipping exceeded the
    accepted round-off budget."""


class SourceStiffnessError(PedflowError):
    """Lane-change source terms are too stiff for the explicit update."""


class ConfigError(PedflowError):
    """A scenario configuration file is missing or inconsistent."""
