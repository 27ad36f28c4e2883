"""Apparent-surface-charge solver for the two-dielectric (local) model.

The induced charge ``sigma`` solves

    (I + eps_hat (-1/2 I + K')) sigma = -eps_hat dphi_coul/dn,

with ``eps_hat = (eps_p - eps_w) / eps_p`` and ``phi_coul`` the Coulomb
potential of the solute charges in the solute dielectric.  The reaction
potential is the single-layer potential of ``sigma``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .kernels import LAPLACE
from .mesh import SurfaceMesh
from .model import BemError, DielectricModel, Solute, coulomb_at_points, reaction_energy
from .operators import BoundaryField, BoundaryOperator, adjoint_double_layer, evaluation_matrix
from .solve import IDENTITY, BlockSystem, SolverConfig, gmres


class GeometryError(BemError, ValueError):
    pass


@dataclass
class Diagnostics:
    iterations: int = 0
    residual: float = 0.0
    residual_history: list = field(default_factory=list)
    wall_seconds: float = 0.0
    outer_iterations: int = 0
    notes: list = field(default_factory=list)


@dataclass
class PcmSolution:
    sigma: BoundaryField
    energy: float
    diagnostics: Diagnostics
    reaction_at_charges: np.ndarray = None


def check_charges_inside(solute: Solute, mesh: SurfaceMesh):
    """Reject charges outside or on the surface (closed meshes only)."""
    if not mesh.closed:
        return
    inside = mesh.contains(solute.positions)
    if not np.all(inside):
        bad = int(np.argmin(inside))
        raise GeometryError(f"charge {bad} at {solute.positions[bad].tolist()} is not strictly inside the surface")


def source_traces(solute: Solute, mesh: SurfaceMesh, eps: float = 1.0):
    """Coulomb potential and its normal derivative at the panel centroids."""
    return coulomb_at_points(solute, mesh.centroids, mesh.normals, eps=eps)


def pcm_system(kprime: BoundaryOperator, dielectrics: DielectricModel, dphi_source: np.ndarray, extra_diagonal=None):
    """Block (1x1) system for the surface charge; ``extra_diagonal`` is added pointwise."""
    eh = dielectrics.eps_hat
    terms = [(1.0 - 0.5 * eh, IDENTITY), (eh, kprime)]
    if extra_diagonal is not None:
        terms.append((1.0, _Diagonal(extra_diagonal)))
    return BlockSystem([[terms]], [-eh * dphi_source])


class _Diagonal:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self.n = self.values.shape[0]

    def apply(self, x):
        return self.values.reshape((-1,) + (1,) * (np.ndim(x) - 1)) * x

    def diagonal(self):
        return self.values


def reaction_potential_at(sigma, mesh: SurfaceMesh, points, rule: int = 3) -> np.ndarray:
    """Single-layer potential of ``sigma`` at off-surface points."""
    values = sigma.values if isinstance(sigma, BoundaryField) else np.asarray(sigma)
    return evaluation_matrix("V", LAPLACE, mesh, points, rule=rule) @ values


def solve_pcm(
    solute: Solute,
    mesh: SurfaceMesh,
    dielectrics: DielectricModel,
    config: SolverConfig = SolverConfig(),
    *,
    rule: int = 3,
    storage: str = "auto",
    kprime: BoundaryOperator | None = None,
    kprime_diagonal: str = "gauss-law",
) -> PcmSolution:
    """Solve for the apparent surface charge and the solvation energy (kcal/mol).

    ``kprime`` may be passed to reuse an assembled Laplace K' on ``mesh``;
    otherwise one is assembled with ``kprime_diagonal`` (see
    :func:`biobem.operators.adjoint_double_layer`).
    """
    start = time.perf_counter()
    check_charges_inside(solute, mesh)
    _, dphi = source_traces(solute, mesh, eps=dielectrics.eps_p)
    if kprime is None:
        kprime = adjoint_double_layer(mesh, rule, storage, kprime_diagonal)
    result = gmres(pcm_system(kprime, dielectrics, dphi), config)
    sigma = BoundaryField(mesh, result.solution[0], "sigma")
    phi_reac = reaction_potential_at(sigma, mesh, solute.positions, rule)
    diag = Diagnostics(result.iterations, result.relative_residual, result.residual_history,
                       time.perf_counter() - start)
    return PcmSolution(sigma, reaction_energy(solute, phi_reac), diag, phi_reac)


def reaction_potential_surface(solution: PcmSolution, mesh: SurfaceMesh, rule: int = 3) -> BoundaryField:
    """Reaction potential at the panel centroids (self panels by the analytic rule)."""
    V = BoundaryOperator("V", LAPLACE, mesh, rule)
    return BoundaryField(mesh, V.apply(solution.sigma.values), "phi")
