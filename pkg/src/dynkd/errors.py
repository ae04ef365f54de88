class NumericalError(ArithmeticError):
    """A loss or gradient became non-finite, or a numeric self-check failed."""


class ReparamError(ValueError):
    """The controller state admits no single final-layer rescaling."""


class DataFormatError(ValueError):
    """Base class for malformed dataset or checkpoint files."""


class BadMagicError(DataFormatError):
    pass


class TruncatedFileError(DataFormatError):
    pass


class CountMismatchError(DataFormatError):
    pass


class ConfigError(ValueError):
    pass
