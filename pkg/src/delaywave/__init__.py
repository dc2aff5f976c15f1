"""Output regulation of an anti-damped wave equation with delayed boundary
measurement and harmonic disturbances of unknown frequency."""

from ._core import BACKEND
from .harness import ClosedLoop, RunOutput, fit_decay, run_closed_loop, run_mode
from .scenario import ScenarioParams, bundled, load_scenario, save_scenario
from .verify import verify_all

__version__ = "0.1.0"

__all__ = ["BACKEND", "ClosedLoop", "RunOutput", "ScenarioParams", "bundled",
           "fit_decay", "load_scenario", "run_closed_loop", "run_mode",
           "save_scenario", "verify_all"]
