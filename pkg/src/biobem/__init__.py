"""Boundary-element solvers for continuum electrostatics of solvated molecules."""

from .model import (
    COULOMB_CONSTANT,
    BemError,
    DielectricModel,
    PointCharge,
    SingularityError,
    Solute,
    coulomb_field_normal,
    coulomb_potential,
    to_kcal_per_mol,
)
from .mesh import SurfaceMesh, icosphere, load_mesh, union_of_spheres_mesh
from .kernels import LAPLACE, KernelKind, Yukawa, green
from .operators import BoundaryField, BoundaryOperator
from .solve import ConvergenceError, SolverConfig, gmres, picard
from .pcm import PcmSolution, solve_pcm
from .nonlocal_solver import NonlocalSolution, solve_nonlocal
from .nlbc import NlbcParams, NlbcSolution, charging_curve, solve_nlbc

__version__ = "0.1.0"

__all__ = [
    "COULOMB_CONSTANT",
    "BemError",
    "BoundaryField",
    "BoundaryOperator",
    "ConvergenceError",
    "DielectricModel",
    "KernelKind",
    "LAPLACE",
    "NlbcParams",
    "NlbcSolution",
    "NonlocalSolution",
    "PcmSolution",
    "PointCharge",
    "SingularityError",
    "Solute",
    "SolverConfig",
    "SurfaceMesh",
    "Yukawa",
    "charging_curve",
    "coulomb_field_normal",
    "coulomb_potential",
    "gmres",
    "green",
    "icosphere",
    "load_mesh",
    "picard",
    "solve_nlbc",
    "solve_nonlocal",
    "solve_pcm",
    "to_kcal_per_mol",
    "union_of_spheres_mesh",
]
