from .group import GroupDescriptor
from .report import (
    Measurement,
    SolveDiagnostics,
    MaxPrincipleReport,
    PoincareEstimate,
    VerificationReport,
    SuiteSummary,
)

__all__ = [
    "GroupDescriptor",
    "Measurement",
    "SolveDiagnostics",
    "MaxPrincipleReport",
    "PoincareEstimate",
    "VerificationReport",
    "SuiteSummary",
]
