"""Exception types raised by the package."""


class SelClustError(Exception):
    """Base class for all errors raised by selclust."""


class InvalidInput(SelClustError, ValueError):
    pass


class OracleSizeExceeded(SelClustError):
    pass


class NotEnoughClusters(SelClustError):
    pass


class DegenerateTruncation(SelClustError):
    """The truncation interval is empty or reduced to a point."""


class InconsistentConditioning(SelClustError):
    """The observation does not lie in the conditioning polyhedron it was paired with."""


class UndefinedContrast(SelClustError):
    """The requested contrast does not exist for the realized clustering."""


class FactorizationFailure(SelClustError, ValueError):
    """A covariance factor is not symmetric positive definite."""
