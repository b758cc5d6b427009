"""Exception types raised by the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class QuadratureError(ArithmeticError):
    """A quadrature did not converge within its refinement budget.

    Attributes
    ----------
    estimates : list of float
        Successive estimates, coarsest first.
    rel_change : float
        Relative change between the last two estimates.
    """

    def __init__(self, message, estimates=(), rel_change=float("nan")):
        super().__init__(message)
        self.estimates = list(estimates)
        self.rel_change = rel_change

    def diagnostics(self):
        return {"estimates": self.estimates, "rel_change": self.rel_change}


class FitError(ValueError):
    """A decay fit found no decay (non-negative slope) or too few samples."""


class ConfigError(ValueError):
    """Invalid run configuration."""
