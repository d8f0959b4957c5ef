"""Simulation and certificate checking for event-triggered sampled-data control."""

from .hybridsim import SimResult, simulate
from .kfun import ComparisonFunction, masp
from .systems import Scenario, build_scenario

__all__ = ["ComparisonFunction", "Scenario", "SimResult", "build_scenario", "masp", "simulate"]
__version__ = "0.1.0"
