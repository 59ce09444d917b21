"""Chance-constrained N-1 DC optimal power flow with affine HVDC/PST corrective control."""
from .formulation import MODES, Formulation, ModeConfig
from .grid import GridCase, bundled_case, load_case, validate_case
from .sensitivity import compute_sensitivities, dc_flows
from .solver import (CcScopfSolution, InfeasibleError, SolverConfig, load_solution, prepare, save_solution,
                     solve_full_ccscopf, solve_monolithic)
from .uncertainty import build_covariance, rescale_historical, sample_normal
from .validation import compare_modes, simulate

__version__ = "0.1.0"
