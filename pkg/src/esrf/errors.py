"""Exception types shared across the package."""


class EsrfError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(EsrfError):
    """Input array has an incompatible or non-square shape."""


class NotPSD(EsrfError):
    """Matrix expected to be symmetric positive semidefinite is not."""


class SolveFailure(EsrfError):
    """A symmetric positive-definite linear solve failed."""


class QuadratureUnderResolved(EsrfError):
    """Quadrature truncation-error estimate exceeds the tolerance."""


class InvalidStep(EsrfError):
    """Nonpositive or grid-incompatible time step."""


class UnknownModel(EsrfError):
    """Requested builtin model name does not exist."""


class UnsupportedTestFunction(EsrfError):
    """Test-function tag not covered by the closed-form moment identities."""


class DegenerateFit(EsrfError):
    """Rate fit attempted on too few points or nonpositive errors."""


class ConfigError(EsrfError):
    """Malformed or inconsistent experiment configuration."""
