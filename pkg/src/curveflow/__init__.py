"""Geometric flows of curves with horizontal ends: discrete geometry, energies,
IMEX time stepping, limit diagnostics and weighted interpolation checks."""

from .geometry import (
    CutoffWeight,
    DiscreteCurve,
    NormalField,
    ReferenceCurveSpec,
    build_reference,
    spec_from_dict,
)
from .energies import adapted_energy, bending_energy, direction_energy
from .flows import FlowParams, SolverConfig, AdaptiveDt, preset, simulate
from .diagnostics import classify_limit, rotation_number

__version__ = "0.1.0"

__all__ = [
    "AdaptiveDt",
    "CutoffWeight",
    "DiscreteCurve",
    "FlowParams",
    "NormalField",
    "ReferenceCurveSpec",
    "SolverConfig",
    "adapted_energy",
    "bending_energy",
    "build_reference",
    "classify_limit",
    "direction_energy",
    "preset",
    "rotation_number",
    "simulate",
    "spec_from_dict",
]
