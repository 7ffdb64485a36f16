"""Controlled blow-up for the focusing cubic wave equation u_tt - Δu = 2u³.

Given a spacelike blow-up surface t = ψ(x), the package builds the singular
expansion, solves the reduced Fuchsian system for the regular remainder,
assembles Cauchy data at t = 0 and checks by direct simulation that the
solution blows up on the prescribed surface.
"""

__version__ = "0.1.0"

from .errors import BlowupControlError, NumericalError, ValidationError
from .expansion import ExpansionCoefficients, compute_coefficients, residual_order_check
from .integrator import IntegratorConfig, ReducedTrajectory, integrate, sample
from .pipeline import (
    CauchyDataRecord,
    ControlBudget,
    PipelineSettings,
    construct_solution,
    extract_boundary_trace,
    run_pipeline,
    sweep,
)
from .reduced import ReducedState, ReducedSystem, assemble_matrices, energy
from .surface import (
    BlowupSurface,
    Bump,
    CosineSeries,
    CosineWell,
    GridSpec,
    Linear,
    Zero,
    build_surface,
)
from .verifier import BlowupMap, SolverConfig, compare_blowup, solve_direct

__all__ = [
    "BlowupControlError", "NumericalError", "ValidationError",
    "ExpansionCoefficients", "compute_coefficients", "residual_order_check",
    "IntegratorConfig", "ReducedTrajectory", "integrate", "sample",
    "CauchyDataRecord", "ControlBudget", "PipelineSettings", "construct_solution",
    "extract_boundary_trace", "run_pipeline", "sweep",
    "ReducedState", "ReducedSystem", "assemble_matrices", "energy",
    "BlowupSurface", "Bump", "CosineSeries", "CosineWell", "GridSpec", "Linear", "Zero", "build_surface",
    "BlowupMap", "SolverConfig", "compare_blowup", "solve_direct",
]
