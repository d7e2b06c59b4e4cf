"""Error taxonomy.

Every failure raised by the library belongs to one of three classes, and the
CLI maps each class to its own exit status:

======================  =========
class                   exit code
======================  =========
``ValidationError``     2
``EstimationError``     3
``NumericalError``      4
======================  =========
"""


class LongMemError(Exception):
    exit_code = 1


class ValidationError(LongMemError, ValueError):
    """Bad input: out-of-domain parameters or an inconsistent configuration."""

    exit_code = 2


class DomainError(ValidationError):
    pass


class ConfigurationError(ValidationError):
    pass


class EstimationError(LongMemError):
    """A fit could not be computed (singular or degenerate design)."""

    exit_code = 3


class NumericalError(LongMemError, ArithmeticError):
    """A numerical routine broke down (bad embedding, nonpositive variance, ...)."""

    exit_code = 4
