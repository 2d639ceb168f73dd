"""patkit: photoacoustic tomography forward/adjoint operators and reconstruction."""

from .grid import Grid, KSpaceOperators, make_wavenumbers, kspace_correction, spectral_derivative
from .medium import Medium, PmlOperators, build_pml, build_medium_scenario_II
from .operators import PatOperatorConfig, PatOperators, smooth_field
from .solver import (
    AcousticState,
    NumericalInstabilityError,
    SensorArray,
    SourceSchedule,
    TimeAxis,
    TimeSeriesData,
    WaveSolver,
)

__version__ = "0.1.0"

__all__ = [
    "AcousticState",
    "Grid",
    "KSpaceOperators",
    "Medium",
    "NumericalInstabilityError",
    "PatOperatorConfig",
    "PatOperators",
    "PmlOperators",
    "SensorArray",
    "SourceSchedule",
    "TimeAxis",
    "TimeSeriesData",
    "WaveSolver",
    "build_medium_scenario_II",
    "build_pml",
    "kspace_correction",
    "make_wavenumbers",
    "smooth_field",
    "spectral_derivative",
    "__version__",
]
