"""Q2/Q1 hexahedral discretization of the mixed (U, V, P) problem."""

from .assembly import Evaluation, FieldState, MixedAssembler, QPState
from .basis import QuadratureRule, shape_functions
from .loads import LoadSpec, TimeFunction, VectorLoad
from .mesh import HexMesh, LBlockDims, generate_box_mesh, generate_lblock_mesh, read_mesh, write_mesh
from .space import N_GAUSS, FaceData, TaylorHoodSpace

__all__ = [
    "Evaluation",
    "FaceData",
    "FieldState",
    "HexMesh",
    "LBlockDims",
    "LoadSpec",
    "MixedAssembler",
    "N_GAUSS",
    "QPState",
    "QuadratureRule",
    "TaylorHoodSpace",
    "TimeFunction",
    "VectorLoad",
    "generate_box_mesh",
    "generate_lblock_mesh",
    "read_mesh",
    "shape_functions",
    "write_mesh",
]
