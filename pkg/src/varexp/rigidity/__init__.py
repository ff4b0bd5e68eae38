"""Estimators for rigidity, Korn and Poincare inequalities and the mixed-growth machinery."""

from .extension import AffineGraph, ExtensionError, ExtensionResult, kernel, kernel_moments, nitsche_extend, quadrature
from .lusin import LusinReport, lusin_truncate, mcshane_extension
from .mixed import MixedReport, MixedSplit, half_ball_mask, mixed_korn_decompose, mixed_rigidity_decompose
from .poisson import PoissonError, laplacian, solve_poisson_dirichlet
from .reports import (
    RigidityReport,
    g_rigidity_report,
    korn_report,
    make_report,
    rigidity_report,
    weighted_poincare_report,
)

__all__ = [
    "AffineGraph",
    "ExtensionError",
    "ExtensionResult",
    "LusinReport",
    "MixedReport",
    "MixedSplit",
    "PoissonError",
    "RigidityReport",
    "g_rigidity_report",
    "half_ball_mask",
    "kernel",
    "kernel_moments",
    "korn_report",
    "laplacian",
    "lusin_truncate",
    "make_report",
    "mcshane_extension",
    "mixed_korn_decompose",
    "mixed_rigidity_decompose",
    "nitsche_extend",
    "quadrature",
    "rigidity_report",
    "solve_poisson_dirichlet",
    "weighted_poincare_report",
]
