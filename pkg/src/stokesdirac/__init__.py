"""Finite element solvers for Stokes optimal control with point data.

Subpackages cover structured simplicial meshes, Grundmann-Moller quadrature,
Taylor-Hood / mini velocity-pressure spaces, saddle-point assembly and direct
solves, Stokeslet manufactured solutions, two box-constrained optimal control
solvers (pointwise tracking and point-source amplitudes), error/EOC analysis,
and a convergence-study CLI.
"""

from .mesh import Mesh, build_unit_mesh, refine_uniform, locate_point
from .quadrature import QuadratureRule, rule_simplex, integrate
from .spaces import (FEFunction, ControlField, VelocityPressureSpace,
                     build_space)
from .manufactured import example_spec
from .analysis import ConvergenceReport, WeightConfig, weight_rho

__all__ = [
    "Mesh", "build_unit_mesh", "refine_uniform", "locate_point",
    "QuadratureRule", "rule_simplex", "integrate",
    "FEFunction", "ControlField", "VelocityPressureSpace", "build_space",
    "example_spec",
    "ConvergenceReport", "WeightConfig", "weight_rho",
]

__version__ = "0.1.0"
