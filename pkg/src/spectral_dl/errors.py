"""Exception hierarchy shared by the library and the CLI."""


class SpectralDLError(Exception):
    """Base class for all library errors."""


class InvalidDimensionError(SpectralDLError, ValueError):
    pass


class InvalidArgumentError(SpectralDLError, ValueError):
    pass


class ConfigurationError(SpectralDLError, ValueError):
    pass


class DegenerateInputError(SpectralDLError, ValueError):
    pass


class InvalidDictionaryError(SpectralDLError, ValueError):
    pass


class NumericError(SpectralDLError, ArithmeticError):
    pass


class DegenerateResultError(SpectralDLError, RuntimeError):
    """The estimator pruned every atom."""


class ParseError(SpectralDLError, ValueError):
    pass
