"""Exception hierarchy shared by every plnmt module."""


class PlnmtError(Exception):
    """Base class; the CLI maps any of these to exit status 1."""


class DimensionError(PlnmtError, ValueError):
    pass


class ContractError(PlnmtError, ValueError):
    """A precondition of an operation was violated by the caller."""


class NumericError(PlnmtError, ArithmeticError):
    pass


class IngestionError(PlnmtError):
    pass


class AlignmentError(IngestionError):
    pass


class FormatError(PlnmtError):
    """A file on disk does not follow its declared format."""


class CompatibilityError(PlnmtError):
    pass


class ConfigError(PlnmtError):
    pass
