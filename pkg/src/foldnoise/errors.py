"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class DivergenceError(ArithmeticError):
    """A deterministic orbit reached a pole of the Riccati quotient."""


class ConvergenceError(RuntimeError):
    """An iterative or adaptive scheme stopped before meeting its tolerance.

    The last achieved estimate is kept on ``estimate`` so callers can decide
    whether it is usable.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate
