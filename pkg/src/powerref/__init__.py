"""Closed-loop wind turbine simulation with a power reference controller.

The package couples a reduced-order turbine with PI pitch/torque loops,
set-point smoothing, a power controller, minimum pitch peak shaving, an EKF
wind speed estimator and a safe/de-rating automaton that raises or lowers the
rated generator speed through a power reference factor R.
"""
from .harness import (CampaignConfig, ControllerPreset, RunResult, SimConfig, preset,
                      run_campaign, run_single, tune_rmax)
from .signals import ConfigError

__version__ = "0.1.0"

__all__ = ["CampaignConfig", "ConfigError", "ControllerPreset", "RunResult", "SimConfig",
           "preset", "run_campaign", "run_single", "tune_rmax", "__version__"]
