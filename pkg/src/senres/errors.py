"""Exception types shared across the package."""


class SenresError(Exception):
    """Base class for all errors raised by senres."""


class ShapeError(SenresError, ValueError):
    pass


class InputTooShortError(SenresError, ValueError):
    pass


class InvalidParamsError(SenresError, ValueError):
    pass


class InvalidChannelsError(SenresError, ValueError):
    pass


class InvalidStateError(SenresError, RuntimeError):
    pass


class TapeError(SenresError, RuntimeError):
    """Raised when a tape is misused (e.g. traversed twice)."""


class FormatError(SenresError, ValueError):
    """Binary container is malformed, truncated or corrupted."""


class ParseError(SenresError, ValueError):
    """Text input could not be parsed. Carries the offending location."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class SchemaError(SenresError, ValueError):
    pass


class ConfigError(SenresError, ValueError):
    pass


class InsufficientDataError(SenresError, ValueError):
    pass


class DivergenceError(SenresError, RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")
