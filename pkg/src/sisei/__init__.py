"""Chemo-mechanical simulation of a silicon particle with an elastoplastic SEI shell.

The package solves the spherically symmetric coupled diffusion and finite
strain mechanics problem with high-order finite elements in space and an
adaptive NDF multistep method in time.
"""
from .constitutive import ButlerVolmer, MaterialParams, OcvCurve
from .driver import ScenarioConfig, load_config, matrix_configs, run_scenario, write_outputs
from .errors import ConfigError, NewtonFailure, SiseiError
from .integrator import NdfIntegrator, TimeController, newton_solve
from .kernels import active as active_backend
from .radial_fem import RadialProblem, build_mesh

__version__ = "0.1.0"

__all__ = [
    "ButlerVolmer", "ConfigError", "MaterialParams", "NdfIntegrator", "NewtonFailure",
    "OcvCurve", "RadialProblem", "ScenarioConfig", "SiseiError", "TimeController",
    "active_backend", "build_mesh", "load_config", "matrix_configs", "newton_solve",
    "run_scenario", "write_outputs",
]
