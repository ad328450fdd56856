"""Pathwise simulation of stochastic third-grade fluids on a periodic box."""

from .fields import ConfigurationError, Grid, VelocityField
from .dynamics import ForcingSchedule, PhysicalParams
from .stochastics import NoisePath, ShiftedPath, generate_path

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ForcingSchedule", "Grid", "NoisePath", "PhysicalParams", "ShiftedPath",
    "VelocityField", "generate_path",
]
