"""Finite-element GSAV solver for the time-dependent Ginzburg-Landau equations."""

__version__ = "0.1.0"

from .assembly import GLDiscretization, PhysParams
from .config import SimConfig, load_config, preset_multiconnected, preset_square
from .mesh import build_dof_map, multiconnected_mesh, unit_square_mesh
from .observables import energy, max_modulus, vortex_count
from .stepper import GSAVStepper, SimResult, run

__all__ = [
    "GLDiscretization", "PhysParams", "SimConfig", "load_config", "preset_square",
    "preset_multiconnected", "build_dof_map", "multiconnected_mesh", "unit_square_mesh",
    "energy", "max_modulus", "vortex_count", "GSAVStepper", "SimResult", "run",
]
