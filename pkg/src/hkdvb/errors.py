"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: coefficients, domain, discretization or file contents."""


class ShapeError(ValueError):
    """Array sizes incompatible with the basis or operator."""


class DomainError(ValueError):
    """A sub-interval or evaluation window lies outside the admissible range."""


class InfeasibleError(ValueError):
    """No weight function can satisfy the requested conditions."""


class BlowUpError(RuntimeError):
    """Non-finite state produced by the time stepper."""

    def __init__(self, time, norm, path_index=None):
        self.time = float(time)
        self.norm = float(norm)
        self.path_index = path_index
        where = "" if path_index is None else f" (path {path_index})"
        super().__init__(f"blow-up at t={self.time:.6g}, |u|={self.norm:.6g}{where}")


class EnsembleError(RuntimeError):
    """Too many paths of an ensemble failed."""
