"""Minimizing movements for finite-strain gradient viscoplasticity."""

from .errors import (
    INFINITE,
    ConfigError,
    DeterminantNotPositive,
    DimensionMismatch,
    InfiniteEnergyState,
    InnerSolverDiverged,
    SchemaMismatch,
    StepRejected,
    TimeOutOfRange,
    VpmmError,
    VpmmIOError,
)

__version__ = "0.1.0"
