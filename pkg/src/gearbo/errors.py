"""Exception types shared across the package."""


class ParameterDomainError(ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ConfigurationError(ValueError):
    """A configuration object or file is inconsistent or incomplete."""


class NumericalDegeneracyError(ArithmeticError):
    """A Gram matrix could not be factorized even after adding jitter."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number
