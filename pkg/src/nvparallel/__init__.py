"""Simulation, analysis and planning tools for parallel readout of NV-center arrays."""
from . import analysis, physics, planning, simulator, statmodels
from .errors import (
    AmbiguousThresholdError,
    ConfigError,
    DegenerateFitError,
    DegenerateReadoutError,
    FitError,
    GeometryError,
    InsufficientSamplesError,
    InvalidArgumentError,
    NVSimError,
    SingularModelError,
    UndefinedCorrelationError,
    ZeroContrastError,
)

__version__ = "0.1.0"
