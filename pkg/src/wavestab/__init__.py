"""Solitary gravity water waves in conformal variables.

Computes the solitary-wave branch by pseudo-arclength continuation of a
variational surface equation, evaluates physical observables, assembles the
nonlocal dispersion operators that govern linear stability, and searches
for purely growing modes of large-amplitude waves.
"""

from .babenko import WaveState, newton_solve
from .branch import (BranchRecord, GridPolicy, StepControl, continue_branch,
                     initial_wave)
from .fields import SurfaceFields, surface_fields
from .observables import Observables, observables
from .spectral import Grid
from .stability import GrowingMode, StabilityReport, find_growing_mode

__all__ = [
    "Grid", "WaveState", "newton_solve",
    "BranchRecord", "GridPolicy", "StepControl", "continue_branch",
    "initial_wave",
    "SurfaceFields", "surface_fields",
    "Observables", "observables",
    "GrowingMode", "StabilityReport", "find_growing_mode",
]
