"""Exception hierarchy for vectorix."""


class VectorixError(Exception):
    """Base class for all errors raised by this package."""


class SingularMatrixError(VectorixError, ValueError):
    """A decomposition met a (numerically) singular input."""


class DimensionError(VectorixError, ValueError):
    """Shapes or permutation lengths do not agree."""


class LLLConvergenceError(VectorixError, RuntimeError):
    """Lattice reduction hit its swap cap without terminating."""


class ChannelFormatError(VectorixError, ValueError):
    """A channel file could not be parsed.

    Parameters
    ----------
    message : str
        What went wrong.
    line : int, optional
        1-based line number in the offending file.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvariantError(VectorixError, AssertionError):
    """A runtime verification check failed."""

    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        super().__init__(f"{invariant}: {detail}" if detail else invariant)
