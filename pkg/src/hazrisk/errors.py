"""Exception types raised by the estimation routines."""

__all__ = [
    "HazriskError",
    "InputError",
    "EstimationError",
    "NoWindowFailuresError",
    "DegenerateWindowError",
    "ConvergenceError",
    "DivergenceError",
    "VarianceUndefinedError",
]


class HazriskError(Exception):
    """Base class for errors raised by this package."""


class InputError(HazriskError):
    """Malformed input data or configuration (CSV schema, bad flags)."""


class EstimationError(HazriskError):
    """An estimation step could not produce a finite, trustworthy answer."""


class NoWindowFailuresError(EstimationError):
    """No failure carries positive kernel weight near the anchor."""

    def __init__(self, anchor: float):
        self.anchor = anchor
        super().__init__(
            f"no failures with positive kernel weight at x={anchor:g}; "
            "the local objective is undefined"
        )


class DegenerateWindowError(EstimationError):
    """Too little local information to identify the polynomial coefficients."""

    def __init__(self, anchor: float, n_effective: int, detail: str = ""):
        self.anchor = anchor
        self.n_effective = n_effective
        msg = (
            f"degenerate window at x={anchor:g}: "
            f"{n_effective} effective failure(s)"
        )
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ConvergenceError(EstimationError):
    """An iterative solver failed to reach its tolerance."""


class DivergenceError(EstimationError):
    """The likelihood is monotone and has no finite maximizer."""


class VarianceUndefinedError(EstimationError):
    """The plug-in variance denominator vanished."""
