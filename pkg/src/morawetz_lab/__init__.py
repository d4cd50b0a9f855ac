"""Numerical verification of Morawetz-type estimates for a damped wave equation
with an inverse-square trapping potential, one spherical mode at a time."""

from .config import ScenarioConfig, load_config, parse_config, shipped_scenarios
from .errors import (
    CausalityError,
    ConfigError,
    CoverageError,
    InstabilityError,
    LabError,
    NyquistError,
    SupportError,
)
from .harness import converge, run_scenario, sweep
from .model import GridSpec, Mode, ModelParams, PotentialProfile
from .solver import evolve_mode

__version__ = "0.1.0"
