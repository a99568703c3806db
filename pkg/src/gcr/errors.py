"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented exit codes: 1 for validation problems, 2 for runtime/numeric
problems (I/O failures surface as OSError and map to 3).
"""


class GcrError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 2


class ValidationError(GcrError):
    """Input that violates a documented precondition or format rule."""

    exit_code = 1


class MalformedHeaderError(ValidationError):
    """Feature file header is missing, truncated, or has bad magic/version."""


class PayloadSizeError(ValidationError):
    """Feature payload length disagrees with the (n, d) header."""


class MetaMismatchError(ValidationError):
    """Metadata rows are malformed or do not align with the feature matrix."""


class NonFiniteError(ValidationError):
    """A feature value is NaN or infinite."""

    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"non-finite feature value in row {row}")


class ZeroRowError(ValidationError):
    """A row with zero Euclidean norm cannot be normalized."""

    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"row {row} has zero norm")


class NumericError(GcrError):
    """Computation produced an unusable numeric result."""


class PropagationError(NumericError):
    """Feature propagation failed; records the iteration and row."""

    def __init__(self, iteration, row, message=None):
        self.iteration = iteration
        self.row = row
        super().__init__(
            message
            or f"propagation produced a zero row at iteration {iteration}, row {row}"
        )
