"""Exception types shared across the package."""


class FunnelShapError(Exception):
    """Base class for all funnelshap errors."""


class PlayerCapExceeded(FunnelShapError):
    """A game has more players than the requested engine can enumerate."""


class PlayerNotInPermutation(FunnelShapError):
    """Asked for the predecessors of a player absent from an ordering."""


class InvalidParameter(FunnelShapError):
    """A numeric parameter is out of its documented range."""


class EvaluationFailed(FunnelShapError):
    """A characteristic function could not be evaluated on a coalition.

    Carries the coalition bitmask so callers can report which subset died;
    the underlying reason travels as ``__cause__``.
    """

    def __init__(self, message: str, coalition: int | None = None):
        super().__init__(message)
        self.coalition = coalition


class UnsatisfiableCoalitions(FunnelShapError):
    """Too many sampled coalitions failed to evaluate to finish a run."""


class EmptyDataset(FunnelShapError):
    """An operation needed at least one unit and got none."""


class NonNumericForNumericRule(FunnelShapError):
    """A numeric coarsening rule met a non-numeric confounder value."""


class NoMatchedStrata(FunnelShapError):
    """Every stratum contains only one group; CEM weights are undefined."""


class DegenerateFunnel(FunnelShapError):
    """A funnel count needed for a ratio is zero; the message names it."""


class InvalidConfig(FunnelShapError):
    """A generator or pipeline configuration is inconsistent."""


class InvalidK(FunnelShapError):
    """Top-k selection asked for k outside 1..n."""


class SchemaMismatch(FunnelShapError):
    """The input file does not provide a column the manifest declares."""


class ParseError(FunnelShapError):
    """A CSV cell could not be parsed; carries row and column."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyInput(FunnelShapError):
    """The input file contains no usable data rows."""


class MissingReport(FunnelShapError):
    """A verification run pointed at a report file that does not exist."""
