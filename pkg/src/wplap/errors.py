"""Exception hierarchy shared by all modules.

Each class carries a ``kind`` string that the command-line front end maps onto
an exit code and writes into its machine-readable error document.
"""


class WplapError(Exception):
    kind = "numeric"


class InvalidInputError(WplapError, ValueError):
    kind = "config"


class DomainError(InvalidInputError):
    """Argument outside the mathematical domain of a function."""


class NotPositiveDefiniteError(InvalidInputError):
    pass


class DegenerateQuadratureError(WplapError):
    pass


class QuadratureOverflowError(WplapError, OverflowError):
    def __init__(self, message, ball=None):
        super().__init__(message)
        self.ball = ball


class CoverageError(WplapError):
    pass


class MeshError(WplapError):
    pass


class AssemblyError(WplapError):
    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class ConvergenceError(WplapError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StallError(ConvergenceError):
    pass


class InconsistencyError(WplapError):
    pass


class ConfigError(InvalidInputError):
    """Malformed or inconsistent run configuration."""


class ArtifactIOError(WplapError, OSError):
    """A referenced input file is missing or unreadable."""

    kind = "io"
