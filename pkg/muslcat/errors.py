class MuslcatError(Exception):
    """
    Base class for all errors raised by muslcat
    """
    pass


class ValidationError(MuslcatError, ValueError):
    """
    The input (a tensor, a config, a file) does not satisfy the operation's preconditions
    """
    pass


class ShapeError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class ManifestError(ValidationError):
    pass


class WavFormatError(ValidationError):
    """
    A WAV file could not be decoded. The message names the byte offset and field.
    """

    def __init__(self, offset: int, field: str, message: str):
        super().__init__(f'offset {offset} ({field}): {message}')
        self.offset = offset
        self.field = field
        self.detail = message


class NonFiniteError(MuslcatError, ArithmeticError):
    """
    A tensor or gradient holds NaN or Inf
    """

    def __init__(self, where: str, index=None):
        msg = f'non-finite value in {where}'
        if index is not None:
            msg += f' at index {index}'
        super().__init__(msg)
        self.where = where
        self.index = index


class MetricUndefined(MuslcatError, ValueError):
    """
    A ranking metric was asked of labels that do not contain both classes
    """
    pass


class EvaluationAborted(MuslcatError, RuntimeError):
    pass


class CheckpointError(ValidationError):
    pass
