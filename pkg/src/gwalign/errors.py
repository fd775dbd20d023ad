"""Exception hierarchy.

Errors are split into two families so that callers (notably the CLI) can map
them onto exit codes: :class:`DataError` for bad or degenerate inputs and
:class:`NumericalError` for floating point failures inside the solvers.
"""


class GWAlignError(Exception):
    """Base class for every error raised by this package."""


class DataError(GWAlignError):
    """Input data is malformed, empty, or degenerate."""


class NumericalError(GWAlignError):
    """A solver hit a floating point failure."""


class FormatError(DataError):
    """A file does not follow the expected text format."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RowError(FormatError):
    """An embedding row has the wrong number of (finite) values."""


class EmptyInputError(DataError):
    """Nothing usable was found in the input."""


class DegenerateVectorError(DataError):
    """A word vector has zero norm, so its cosine similarities are undefined."""

    def __init__(self, word):
        self.word = word
        super().__init__(f"zero-norm vector for word {word!r}")


class DegenerateMatrixError(DataError):
    """A similarity matrix cannot be normalized (its statistic is zero)."""


class ShapeError(DataError, ValueError):
    """Array shapes are inconsistent."""


class EmptyEvaluationError(DataError):
    """No lexicon entry could be evaluated against a translation table."""

    def __init__(self, lexicon_size, evaluable=0):
        self.lexicon_size = lexicon_size
        self.evaluable = evaluable
        super().__init__(
            f"no evaluable lexicon entries ({evaluable} of {lexicon_size} "
            "source words found in the translation table)"
        )


class NumericalUnderflowError(NumericalError):
    """``exp(-C / lambda)`` underflowed, leaving a row or column without mass.

    ``lam`` is the regularization that failed; ``attempted`` lists every
    value tried before giving up (filled in by the GW solver's fallback).
    """

    def __init__(self, lam, detail="", attempted=None):
        self.lam = lam
        self.attempted = tuple(attempted) if attempted else (lam,)
        tried = ", ".join(f"{v:g}" for v in self.attempted)
        msg = f"numerical underflow in Sinkhorn scaling (lambda tried: {tried})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class StageError(GWAlignError):
    """Wraps an error raised inside one stage of the alignment pipeline."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
