"""Exception types shared across the package."""


class StefanError(Exception):
    """Base class for all package errors."""


class DomainError(StefanError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ConfigError(StefanError, ValueError):
    """A configuration document is malformed or incomplete."""


class MissingDataError(ConfigError):
    """A variant needs an input function that was not supplied."""


class BoundaryPositivityError(StefanError, ValueError):
    """The moving boundary is not bounded away from zero."""

    def __init__(self, t_star: float, value: float):
        self.t_star = float(t_star)
        self.value = float(value)
        super().__init__(f"s(t) = {value:.6g} <= 0 at t = {t_star:.6g}")


class NumericalError(StefanError, ArithmeticError):
    """Base class for failures of a numerical procedure."""


class DenominatorTooSmall(NumericalError):
    """A denominator fell below the guard threshold.

    Attributes
    ----------
    name : str
        Symbolic name of the denominator (``"w"``, ``"m"``, ``"R"`` ...).
    t_star : float
        First grid time at which the guard failed.
    value : float
        Denominator value at ``t_star``.
    threshold : float
        Guard threshold that was violated.
    """

    def __init__(self, name: str, t_star: float, value: float, threshold: float):
        self.name = name
        self.t_star = float(t_star)
        self.value = float(value)
        self.threshold = float(threshold)
        super().__init__(
            f"denominator {name} too small at t = {t_star:.6g}: "
            f"|{name}| = {abs(value):.3e} < {threshold:.3e}"
        )


class PicardDivergence(NumericalError):
    """Picard iteration did not reach the requested tolerance."""

    def __init__(self, iterations: int, increment: float, tol: float):
        self.iterations = iterations
        self.increment = float(increment)
        self.tol = float(tol)
        super().__init__(
            f"Picard iteration stalled after {iterations} sweeps "
            f"(last increment {increment:.3e} > tol {tol:.3e})"
        )
