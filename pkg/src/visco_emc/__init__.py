"""Energy-momentum consistent time integration for incompressible finite-strain viscoelastodynamics."""

from .errors import (
    ConfigError,
    ConvergenceError,
    MeshError,
    NonPositiveJacobianError,
    SingularTensorError,
    UnsupportedSchemeError,
    ViscoEMCError,
)
from .integrators import SchemeKind
from .materials import EquilibriumModel, MaterialParams, ViscoBranch

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "EquilibriumModel",
    "MaterialParams",
    "MeshError",
    "NonPositiveJacobianError",
    "SchemeKind",
    "SingularTensorError",
    "UnsupportedSchemeError",
    "ViscoBranch",
    "ViscoEMCError",
    "__version__",
]
