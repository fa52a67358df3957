"""Stable-motion Fleming-Viot simulation, genealogy and scaling experiments."""
from .stable_motion import RngStream, StableParams
from .schedule import SamplingSchedule
from .testfunctions import TestFunction, from_spec

__all__ = ["RngStream", "StableParams", "SamplingSchedule", "TestFunction", "from_spec"]
__version__ = "0.1.0"
