"""Eigenmode analysis of networks of damped harmonic oscillators.

Damped systems ``d_t^2 phi + Gamma d_t phi + K phi = 0`` are treated through a
symmetric bilinear map under which the evolution operator is symmetric, so
their modes form a normalizable, orthogonal basis away from critical points.
"""
from .core import (
    AsymmetryWarning,
    CriticalSystemError,
    DampedModesError,
    DimensionError,
    GainWarning,
    Mode,
    ModeBasis,
    NumericsPolicy,
    OscillatorSystem,
    PhaseVector,
    bilinear_map,
    companion_matrix,
    dual,
    evolution_operator,
    inner_product,
    lowered_operator,
    metric,
    rayleigh_quotient,
)
from .dynamics import evolve, expand, green_eigensum, green_frequency, integrate_direct
from .spectral import characteristic, criticality_scan, eigenmodes, sum_rules

__version__ = "0.1.0"

__all__ = [
    "AsymmetryWarning",
    "CriticalSystemError",
    "DampedModesError",
    "DimensionError",
    "GainWarning",
    "Mode",
    "ModeBasis",
    "NumericsPolicy",
    "OscillatorSystem",
    "PhaseVector",
    "bilinear_map",
    "characteristic",
    "companion_matrix",
    "criticality_scan",
    "dual",
    "eigenmodes",
    "evolution_operator",
    "evolve",
    "expand",
    "green_eigensum",
    "green_frequency",
    "inner_product",
    "integrate_direct",
    "lowered_operator",
    "metric",
    "rayleigh_quotient",
    "sum_rules",
]
