"""Exception hierarchy shared across the package."""


class WrongEventError(Exception):
    pass


class ParameterError(WrongEventError, ValueError):
    """Invalid argument values, shapes or sizes."""


class DomainError(WrongEventError, ValueError):
    """Input outside the mathematical domain of a function."""


class FitError(WrongEventError):
    """A mixture could not be fitted (too few or degenerate values)."""


class DegenerateFitError(FitError):
    pass


class StateError(WrongEventError, RuntimeError):
    """Operation called while the object is in the wrong state."""


class NumericError(WrongEventError, FloatingPointError):
    pass


class EvaluationError(WrongEventError, ValueError):
    pass


class ParseError(WrongEventError, ValueError):
    pass


class SchemaError(WrongEventError, ValueError):
    pass


class ConfigError(WrongEventError, ValueError):
    """Invalid experiment configuration; the message names the key path."""


class OutputExistsError(WrongEventError, FileExistsError):
    """Refusing to write into a non-empty run directory without force."""
