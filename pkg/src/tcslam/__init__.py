"""Cooperative vehicle localization and reflector mapping from multipath observations."""
from .channel import NoiseModel, calibrate_sigma_from_median
from .config import RunConfig
from .experiment import run_building_sweep, run_cell, run_experiment

__all__ = ["NoiseModel", "RunConfig", "calibrate_sigma_from_median", "run_building_sweep", "run_cell", "run_experiment"]
__version__ = "0.1.0"
