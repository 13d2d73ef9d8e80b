from .custom_exceptions import *

__all__ = [
    "BaseCarnotError",
    "DimensionMismatchError",
    "DomainError",
    "BallOutsideGridError",
    "EmptyBallError",
    "SingularityError",
    "DegenerateInputError",
    "NonEllipticError",
    "ConvergenceError",
    "NotPositiveDefiniteError",
    "ConfigError",
    "ArtifactWriteError",
    "UnknownCheckError",
]
