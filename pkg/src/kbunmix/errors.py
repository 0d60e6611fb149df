"""Exception hierarchy for kbunmix."""


class UnmixError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(UnmixError, ValueError):
    def __init__(self, axis, expected, got, what=""):
        self.axis = axis
        self.expected = expected
        self.got = got
        msg = f"dimension mismatch on {axis}: expected {expected}, got {got}"
        if what:
            msg += f" ({what})"
        super().__init__(msg)


class InvariantViolation(UnmixError, ValueError):
    pass


class DomainError(UnmixError, ValueError):
    pass


class DegenerateSignal(UnmixError, ValueError):
    def __init__(self, msg, column=None):
        self.column = column
        super().__init__(msg)


class InvalidRank(UnmixError, ValueError):
    pass


class RankTooLarge(InvalidRank):
    pass


class SvdFailure(UnmixError, RuntimeError):
    pass


class InvalidTheta(UnmixError, ValueError):
    pass


class InvalidSpec(UnmixError, ValueError):
    pass


class LibraryTooSmall(InvalidSpec):
    pass


class ZeroVector(UnmixError, ValueError):
    pass


class FormatError(UnmixError, ValueError):
    """Base class for malformed input files."""


class BadMagic(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class NonFiniteValue(FormatError):
    pass


class ParseError(FormatError):
    def __init__(self, msg, line=None):
        self.line = line
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)


class RaggedRows(ParseError):
    pass


class WriteFailure(UnmixError, OSError):
    pass
