"""Level-set simulation of nonlocal front propagation, with numerical checks of its a-priori estimates."""
from .eikonal import ConstantVelocity, EikonalProblem, FrameVelocity, FunctionVelocity, Trajectory, solve
from .geometry import ConeParams, cone_certificate, cone_parameters, extract_front, perimeter
from .green import Potential, i_n_constant, phi
from .grid import Grid, InitialDatum, PhaseIndicator, ScalarField, datum_from_profile, signed_distance
from .reachability import minimal_time, pontryagin_integrate
from .scenarios import builtin_scenario, load_scenario
from .velocity import DislocationModel, FnModel, disk_kernel
from .weak import WeakSolveConfig, picard_solve, uniqueness_experiment

__version__ = "0.1.0"

__all__ = [
    "ConeParams", "ConstantVelocity", "DislocationModel", "EikonalProblem", "FnModel", "FrameVelocity",
    "FunctionVelocity", "Grid", "InitialDatum", "PhaseIndicator", "Potential", "ScalarField", "Trajectory",
    "WeakSolveConfig", "builtin_scenario", "cone_certificate", "cone_parameters", "datum_from_profile",
    "disk_kernel", "extract_front", "i_n_constant", "load_scenario", "minimal_time", "perimeter", "phi",
    "picard_solve", "pontryagin_integrate", "signed_distance", "solve", "uniqueness_experiment",
]
