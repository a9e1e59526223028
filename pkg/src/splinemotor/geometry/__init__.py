"""Parametric multipatch geometry of the motor cross-section."""
from .builder import build_geometry
from .design import (DEG, MM, N_VARIABLES, DesignBounds, DesignVector,
                     VARIABLE_NAMES, default_bounds, initial_design)
from .feasibility import FeasibilityResult, feasibility
from .machine import MachineConstants
from .patchwork import (BoundaryEdge, GeometryError, Interface,
                        MachinePatchwork, Patch)

__all__ = [
    "BoundaryEdge", "DEG", "DesignBounds", "DesignVector", "FeasibilityResult",
    "GeometryError", "Interface", "MM", "MachineConstants", "MachinePatchwork",
    "N_VARIABLES", "Patch", "VARIABLE_NAMES", "build_geometry",
    "default_bounds", "feasibility", "initial_design",
]
