"""Error types shared across the package."""


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class DomainError(ValueError):
    """Argument lies outside the domain of the requested quantity."""


class DualInfeasibleError(ValueError):
    """A dual iterate has entries outside [-lambda, lambda]."""


class ConfigError(ValueError):
    """A configuration value violates a documented constraint."""


class DivergenceError(RuntimeError):
    """A solver run produced non-finite or exploding values."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics
