"""Exception hierarchy shared by all randcert modules."""


class RandcertError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(RandcertError, ValueError):
    """Array shapes or scenarios do not match."""


class UnsupportedScenarioError(RandcertError, ValueError):
    pass


class InvalidCorrelatorsError(RandcertError, ValueError):
    pass


class ResourceLimitError(RandcertError):
    """An enumeration or basis would exceed its configured cap."""


class InfeasibleProblemError(RandcertError):
    """The solver proved the program infeasible (e.g. a behavior outside Q_k or NS)."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class SolverError(RandcertError):
    """Numerical failure, as opposed to proven infeasibility."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class UnverifiedCertificateError(RandcertError):
    pass
