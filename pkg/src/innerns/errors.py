"""Exception hierarchy shared across the package."""


class InnerNSError(Exception):
    """Base class for every error raised by this package."""

    code = "internal"


class InputError(InnerNSError):
    """Bad user input: malformed files, invalid counts, bad expressions."""

    code = "input"


class NumericError(InnerNSError):
    """A numerical or sampling stage failed."""

    code = "numeric"


class DegenerateInputError(NumericError):
    code = "degenerate-input"


class SamplerExhaustedError(NumericError):
    code = "sampler-exhausted"

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class StallError(NumericError):
    code = "walk-stall"


class ConstraintInversionError(NumericError):
    code = "constraint-inversion"


class CenterBelowConstraintError(NumericError):
    code = "center-below-constraint"


class DimensionMismatchError(InputError):
    code = "dimension-mismatch"


class ZeroCountError(InputError):
    code = "zero-count"


class ParseError(InputError):
    """Count-file parse failure carrying a 1-based line/column."""

    code = "parse"

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" at line {line}" + (f", column {column}" if column is not None else "")
        super().__init__(message + loc)
        self.line = line
        self.column = column


class ExprSyntaxError(InputError):
    code = "expr-syntax"

    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownIdentifierError(InputError):
    code = "expr-unknown-identifier"


class IndexOutOfRangeError(InputError):
    code = "expr-index-out-of-range"


class EvaluationError(NumericError):
    code = "expr-evaluation"

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class AllZeroEvidenceError(NumericError):
    code = "all-zero-evidence"


class ConsistencyError(NumericError):
    code = "internal-consistency"
