"""Exception hierarchy shared by all modules.

The CLI maps these to exit codes: schema/argument problems exit 2,
resource caps exit 3, numerical failures exit 4.
"""


class ZrpError(Exception):
    exit_code = 1


class ArgumentError(ZrpError, ValueError):
    """Bad arguments or configuration (schema violations included)."""

    exit_code = 2


class ModelError(ZrpError, ValueError):
    """The model itself is inconsistent (e.g. disconnected walk)."""

    exit_code = 2


class ResourceError(ZrpError):
    """A configured size cap would be exceeded."""

    exit_code = 3


class NumericError(ZrpError, ArithmeticError):
    """An iterative method failed or a derived quantity is invalid."""

    exit_code = 4
