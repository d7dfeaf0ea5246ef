"""Exception hierarchy shared by all modules.

Every exception carries a ``kind`` string used by the CLI to map failures
onto its stable exit-code contract (io=2, shape=3, format=4, selfcheck=5,
anything else=1).
"""


class ApoodError(Exception):
    kind = "other"


class FormatError(ApoodError):
    """Malformed file: bad magic, bad schema, unparseable content."""

    kind = "format"


class TruncationError(FormatError):
    """Declared payload extends past the end of the file."""

    kind = "format"


class DataError(ApoodError):
    """Payload decoded but violates a data invariant (NaN/Inf values)."""

    kind = "data"


class ArgumentError(ApoodError, ValueError):
    """Caller violated a precondition."""

    kind = "argument"


class ShapeError(ArgumentError):
    """Dimension mismatch between operands."""

    kind = "shape"


class IoError(ApoodError):
    kind = "io"


class StateError(ApoodError):
    """Operation requires a state the object is not in (e.g. frozen model)."""

    kind = "state"


class DegenerateParamsError(ApoodError):
    """Parameters outside the trainable region (zero-norm query block)."""

    kind = "degenerate"


class DivergenceError(ApoodError):
    """Training produced a non-finite loss."""

    kind = "divergence"

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class NumericalError(ApoodError):
    """Iterative numerical routine failed to converge."""

    kind = "numerical"
