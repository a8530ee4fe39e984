"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PCFlowError(Exception):
    """Base class for all errors raised by pcflow."""


class ShapeError(PCFlowError, ValueError):
    """Array dimensions do not chain or do not match the network."""


class InvalidDimensionError(PCFlowError, ValueError):
    pass


class NotLinearNetworkError(PCFlowError, ValueError):
    """A closed-form routine was called on a network with nonlinear layers or biases."""


class DivergenceError(PCFlowError, FloatingPointError):
    """The integrator produced non-finite activities."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class BudgetError(PCFlowError, RuntimeError):
    """The solver exhausted ``max_steps`` before reaching ``t_max``."""

    def __init__(self, message: str, stats=None, state=None):
        super().__init__(message)
        self.stats = stats
        self.state = state


class IdxError(PCFlowError, ValueError):
    """Base for every IDX parsing failure."""


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxTrailingDataError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


class IdxHeaderError(IdxError):
    """Header is well formed but describes an unsupported or empty layout."""


class CsvFormatError(PCFlowError, ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}"
        if line is not None:
            loc = f"{loc}:{line}" if loc else f"line {line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class PlotError(PCFlowError, ValueError):
    """Nothing to plot, or CSVs of incompatible kinds."""
