"""Exception types shared across the package."""


class DomainError(ValueError):
    """A parameter lies outside the domain where a quantity is finite."""


class DivergenceError(DomainError):
    """An improper integral or moment diverges for the given parameters."""


class ConfigError(ValueError):
    """Invalid run configuration.

    ``violations`` holds every problem found, not just the first one.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class PreconditionError(RuntimeError):
    """A check was called outside the regime where it is meaningful."""


class SimulationError(RuntimeError):
    """Non-finite values appeared during time integration."""


class WindowTooNarrowError(RuntimeError):
    """The path-ensemble window leaks more mass than the tail budget allows."""

    def __init__(self, message, suggested_half_width):
        super().__init__(message)
        self.suggested_half_width = suggested_half_width
