"""Exception types raised across the package."""


class MesomlError(Exception):
    """Base class for all package errors."""


class ParseError(MesomlError, ValueError):
    """Malformed input file (bad row length, unparseable value)."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class SchemaError(MesomlError, ValueError):
    """Dataset structure does not satisfy a precondition."""


class DivergenceError(MesomlError, ArithmeticError):
    """Training produced non-finite parameters or loss."""


class FoldError(MesomlError):
    """A learner failed on one cross-validation fold."""

    def __init__(self, fold, cause):
        super().__init__(f"fold {fold}: {cause}")
        self.fold = fold
        self.cause = cause


class StageError(MesomlError):
    """An experiment pipeline stage failed."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause

    @classmethod
    def wrap(cls, stage, fn, *args, **kwargs):
        """Call ``fn``; re-raise any failure tagged with ``stage``."""
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except Exception as exc:
            raise cls(stage, exc) from exc
