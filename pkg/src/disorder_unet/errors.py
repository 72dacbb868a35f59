"""Exception hierarchy.

Every error carries a short machine-readable ``category`` which the CLI maps
onto its exit codes.
"""


class DisorderUnetError(Exception):
    category = "error"


class ShapeError(DisorderUnetError, ValueError):
    """Array shapes disagree; the message names the offending axis."""

    category = "shape"


class ValidationError(DisorderUnetError, ValueError):
    category = "validation"


class FormatError(DisorderUnetError, ValueError):
    """Malformed input file.

    ``position`` is a 1-based line number for text formats and a byte offset
    for binary ones.
    """

    category = "format"

    def __init__(self, message, path=None, position=None):
        self.path = path
        self.position = position
        where = []
        if path is not None:
            where.append(str(path))
        if position is not None:
            where.append(f"at {position}")
        if where:
            message = f"{message} ({' '.join(where)})"
        super().__init__(message)


class MagicError(FormatError):
    category = "bad-magic"


class VersionError(FormatError):
    category = "bad-version"


class TruncationError(FormatError):
    category = "truncated"


class SizeMismatchError(FormatError):
    category = "size-mismatch"


class NonFiniteError(FormatError):
    category = "non-finite"


class LengthMismatchError(FormatError):
    """Sequence and per-residue annotation lengths disagree."""

    category = "length-mismatch"


class MissingEmbeddingError(DisorderUnetError, LookupError):
    category = "missing-embedding"

    def __init__(self, missing):
        self.missing = sorted(missing)
        shown = ", ".join(self.missing[:20])
        more = "" if len(self.missing) <= 20 else f" (+{len(self.missing) - 20} more)"
        super().__init__(f"no embedding for {len(self.missing)} id(s): {shown}{more}")


class SequenceTooLongError(ValidationError):
    category = "too-long"


class UndefinedMetricError(DisorderUnetError, ValueError):
    """A metric is undefined for the given labels, e.g. AUC with one class."""

    category = "undefined-metric"
