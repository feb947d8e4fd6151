"""Exception types raised across the package."""


class HamredError(Exception):
    """Base class for all package errors."""


class DimensionError(HamredError, ValueError):
    """Array shapes are inconsistent with the operation."""


class ContractError(HamredError, ValueError):
    """An input violates a documented precondition."""


class DegenerateSpectrumError(HamredError, ArithmeticError):
    """Eigenvalues of the extended snapshot Gram are not cleanly paired."""


class SingularInterpolationError(HamredError, ArithmeticError):
    """The DEIM interpolation system became singular."""

    def __init__(self, msg, column=None):
        super().__init__(msg)
        self.column = column


class NewtonConvergenceError(HamredError, ArithmeticError):
    """Newton's method failed to reach the residual tolerance."""

    def __init__(self, msg, residual=None, step=None):
        super().__init__(msg)
        self.residual = residual
        self.step = step


class EmptyBasisError(HamredError, ArithmeticError):
    """The selected snapshots carry no energy."""


class DictionaryFormatError(HamredError, OSError):
    """Base class for dictionary container errors."""


class NotADictionaryFile(DictionaryFormatError):
    pass


class CorruptHeader(DictionaryFormatError):
    pass


class TruncatedPayload(DictionaryFormatError):
    pass


class DictionaryDimensionMismatch(DictionaryFormatError):
    pass


class ConfigError(HamredError, ValueError):
    """Invalid experiment configuration."""

    def __init__(self, msg, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{msg} ({', '.join(where)})" if where else msg)
        self.field = field
        self.line = line
