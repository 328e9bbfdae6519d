"""Exception types shared across the package."""


class KinsearchError(Exception):
    """Base class for all errors raised by this package."""


# -- embedding store --------------------------------------------------------

class ParseError(KinsearchError):
    """Malformed file content. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateIdError(KinsearchError):
    pass


class PersonFamilyConflictError(KinsearchError):
    pass


class BadMagicError(KinsearchError):
    pass


class TruncatedFileError(KinsearchError):
    pass


class NonFiniteValueError(KinsearchError):
    """A NaN/Inf value in an embedding payload. Carries (row, col)."""

    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(f"non-finite value at row {row}, column {col}")


class RowOutOfRangeError(KinsearchError):
    pass


# -- similarity -------------------------------------------------------------

class ZeroVectorError(KinsearchError):
    pass


class DimensionMismatchError(KinsearchError):
    pass


class UnknownImageIdError(KinsearchError):
    pass


# -- pair sampling ----------------------------------------------------------

class NotEnoughFamiliesError(KinsearchError):
    pass


class NoEligibleAnchorError(KinsearchError):
    pass


class UnknownKinTypeError(KinsearchError):
    pass


# -- calibration ------------------------------------------------------------

class DegenerateLabelsError(KinsearchError):
    pass


class EmptyScoresError(KinsearchError):
    pass


class LengthMismatchError(KinsearchError):
    pass


# -- adapter training -------------------------------------------------------

class LabelOutOfRangeError(KinsearchError):
    pass


class IndexOutOfRangeError(KinsearchError):
    pass


# -- retrieval --------------------------------------------------------------

class EmptyProbeError(KinsearchError):
    pass


class NoRelevantError(KinsearchError):
    pass


# -- synthetic data ---------------------------------------------------------

class InvalidConfigError(KinsearchError):
    pass
