"""Lorentz nonlocal-dielectric solver.

Unknowns are the reaction parts of the interior potential trace and its
normal derivative, plus the scaled auxiliary potential
``Psi = (psi - eps_p * phi_mol) / eps_inf`` of the solvent.  The Yukawa
operators use the rescaled length ``lambda_w * sqrt(eps_inf / eps_w)``.

Block rows (``V``/``K`` Laplace, ``VY``/``KY`` Yukawa, ``DR`` = Yukawa minus
Laplace)::

    [1/2 - KY   (ep/ei) VY - (ep/ew) VDR   (ei/ew) KDR ] [phi_R ]   [xi]
    [1/2 + K    -V                          0          ] [dphi_R] = [0 ]
    [0          (ep/ei) V                   1/2 - K    ] [Psi   ]   [0 ]

with ``xi = -(1/2 - KY + (ep/ew) KDR) phi_mol - ((ep/ei) VY - (ep/ew) VDR) dphi_mol``
and ``phi_mol`` the Coulomb potential of the charges in the solute dielectric.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import LAPLACE, NEAR_FACTOR, Yukawa
from .mesh import SurfaceMesh
from .model import BemWarning, DielectricModel, Solute, coulomb_at_points, reaction_energy
from .operators import BoundaryField, BoundaryOperator, adjoint_double_layer, evaluation_matrix
from .pcm import Diagnostics, check_charges_inside, solve_pcm
from .solve import IDENTITY, BlockSystem, SolverConfig, gmres


class NearSurfaceWarning(BemWarning):
    """Evaluation point close enough to the surface to need near-singular quadrature."""


@dataclass(frozen=True)
class NonlocalTraces:
    """Total interior traces and the auxiliary field on one mesh.

    ``source_eps`` is the permittivity the Coulomb part was computed with,
    so the reaction part can be recovered later.
    """

    phi: BoundaryField
    dphi_dn: BoundaryField
    psi_cov: BoundaryField
    source_eps: float = 1.0

    def __post_init__(self):
        if not (len(self.phi) == len(self.dphi_dn) == len(self.psi_cov)):
            raise ValueError("trace lengths differ")

    def scaled(self, factor: float) -> "NonlocalTraces":
        m = self.phi.mesh
        return NonlocalTraces(
            BoundaryField(m, factor * self.phi.values, "phi"),
            BoundaryField(m, factor * self.dphi_dn.values, "dphi_dn"),
            BoundaryField(m, factor * self.psi_cov.values, "psi_cov"),
            self.source_eps,
        )


@dataclass
class NonlocalSolution:
    traces: NonlocalTraces
    energy: float
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    reaction_at_charges: np.ndarray = None
    delegated: bool = False


@dataclass
class NonlocalOperators:
    """Laplace and Yukawa layer operators on one mesh."""

    V: BoundaryOperator
    K: BoundaryOperator
    VY: BoundaryOperator
    KY: BoundaryOperator

    @property
    def lengthscale(self) -> float:
        return self.VY.kernel.lengthscale


def laplace_pair(mesh: SurfaceMesh, rule: int = 3, storage: str = "auto"):
    return BoundaryOperator("V", LAPLACE, mesh, rule, storage), BoundaryOperator("K", LAPLACE, mesh, rule, storage)


def nonlocal_operators(mesh, lengthscale, rule=3, storage="auto", laplace=None) -> NonlocalOperators:
    """Assemble the four layer operators; ``laplace=(V, K)`` reuses existing Laplace ones."""
    V, K = laplace if laplace is not None else laplace_pair(mesh, rule, storage)
    kernel = Yukawa(lengthscale)
    return NonlocalOperators(V, K, BoundaryOperator("V", kernel, mesh, rule, storage),
                             BoundaryOperator("K", kernel, mesh, rule, storage))


def _check_nonlocal(dielectrics: DielectricModel):
    if dielectrics.lambda_w == 0.0:
        raise ValueError("lambda_w = 0 is the local model; use solve_pcm (solve_nonlocal delegates automatically)")


def _source(solute, mesh, dielectrics):
    return coulomb_at_points(solute, mesh.centroids, mesh.normals, eps=dielectrics.eps_p)


def assemble_nonlocal_system(
    solute: Solute,
    mesh: SurfaceMesh,
    dielectrics: DielectricModel,
    rule: int = 3,
    *,
    storage: str = "auto",
    operators: NonlocalOperators | None = None,
) -> BlockSystem:
    """Three-by-three block system for the reaction traces and ``Psi``."""
    _check_nonlocal(dielectrics)
    ops = operators or nonlocal_operators(mesh, dielectrics.screening_length, rule, storage)
    ep, ew, ei = dielectrics.eps_p, dielectrics.eps_w, dielectrics.eps_inf
    V, K, VY, KY = ops.V, ops.K, ops.VY, ops.KY
    phi_mol, dphi_mol = _source(solute, mesh, dielectrics)

    # V^DR and K^DR enter as differences of the assembled Yukawa and Laplace operators
    row1_phi = [(0.5, IDENTITY), (-1.0, KY)]
    row1_dphi = [(ep / ei - ep / ew, VY), (ep / ew, V)]
    row1_psi = [(ei / ew, KY), (-ei / ew, K)]
    xi = -(0.5 * phi_mol - KY.apply(phi_mol) + (ep / ew) * (KY.apply(phi_mol) - K.apply(phi_mol)))
    xi -= (ep / ei - ep / ew) * VY.apply(dphi_mol) + (ep / ew) * V.apply(dphi_mol)
    n = len(mesh)
    blocks = [
        [row1_phi, row1_dphi, row1_psi],
        [[(0.5, IDENTITY), (1.0, K)], [(-1.0, V)], None],
        [None, [(ep / ei, V)], [(0.5, IDENTITY), (-1.0, K)]],
    ]
    return BlockSystem(blocks, [xi, np.zeros(n), np.zeros(n)])


def interior_reaction_potential(traces: NonlocalTraces, solute: Solute, mesh: SurfaceMesh, points, *,
                                rule: int = 3, warn: bool = True) -> np.ndarray:
    """Reaction potential at interior points from Green's representation of the traces."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if warn:
        close = mesh.distance_to_panels(points) < NEAR_FACTOR * mesh.diameters.max()
        if np.any(close):
            warnings.warn(
                f"{int(close.sum())} evaluation point(s) within {NEAR_FACTOR:g} panel diameters of the surface; "
                "near-singular quadrature in use",
                NearSurfaceWarning,
                stacklevel=2,
            )
    phi_mol, dphi_mol = coulomb_at_points(solute, mesh.centroids, mesh.normals, eps=traces.source_eps)
    u = traces.phi.values - phi_mol
    du = traces.dphi_dn.values - dphi_mol
    S = evaluation_matrix("V", LAPLACE, mesh, points, rule=rule)
    D = evaluation_matrix("K", LAPLACE, mesh, points, rule=rule)
    return S @ du - D @ u


def surface_map_points(mesh: SurfaceMesh, offset: float = 1e-3) -> np.ndarray:
    """Centroids pulled inward by ``offset`` panel diameters."""
    return mesh.centroids - (offset * mesh.diameters)[:, None] * mesh.normals


def reaction_surface_map(solution: NonlocalSolution, solute: Solute, mesh: SurfaceMesh, rule: int = 3) -> BoundaryField:
    """Reaction potential just inside every panel centroid."""
    values = interior_reaction_potential(solution.traces, solute, mesh, surface_map_points(mesh), rule=rule, warn=False)
    return BoundaryField(mesh, values, "phi")


def _delegate_to_pcm(solute, mesh, dielectrics, config, rule, storage):
    sol = solve_pcm(solute, mesh, dielectrics, config, rule=rule, storage=storage)
    V = BoundaryOperator("V", LAPLACE, mesh, rule, storage)
    Kp = adjoint_double_layer(mesh, rule, storage)
    sigma = sol.sigma.values
    phi_mol, dphi_mol = _source(solute, mesh, dielectrics)
    # interior limit of the single-layer normal derivative
    dphi_reac = 0.5 * sigma + Kp.apply(sigma)
    traces = NonlocalTraces(
        BoundaryField(mesh, phi_mol + V.apply(sigma), "phi"),
        BoundaryField(mesh, dphi_mol + dphi_reac, "dphi_dn"),
        BoundaryField(mesh, np.zeros(len(mesh)), "psi_cov"),
        dielectrics.eps_p,
    )
    diag = sol.diagnostics
    diag.notes.append("lambda_w = 0: solved with the local surface-charge model")
    return NonlocalSolution(traces, sol.energy, diag, sol.reaction_at_charges, delegated=True)


def solve_nonlocal(
    solute: Solute,
    mesh: SurfaceMesh,
    dielectrics: DielectricModel,
    config: SolverConfig = SolverConfig(),
    *,
    rule: int = 3,
    storage: str = "auto",
    operators: NonlocalOperators | None = None,
    laplace=None,
) -> NonlocalSolution:
    """Solve the nonlocal boundary-integral system; energy in kcal/mol.

    ``lambda_w = 0`` is handed to :func:`solve_pcm` and flagged in the
    diagnostics notes.  ``operators`` (or just the Laplace pair ``laplace``)
    may be passed to reuse assembled operators across solves.
    """
    start = time.perf_counter()
    check_charges_inside(solute, mesh)
    if dielectrics.lambda_w == 0.0:
        return _delegate_to_pcm(solute, mesh, dielectrics, config, rule, storage)
    if operators is None:
        operators = nonlocal_operators(mesh, dielectrics.screening_length, rule, storage, laplace)
    elif abs(operators.lengthscale - dielectrics.screening_length) > 1e-12 * dielectrics.screening_length:
        raise ValueError("operators were assembled for a different Yukawa length")
    system = assemble_nonlocal_system(solute, mesh, dielectrics, rule, operators=operators)
    result = gmres(system, config)
    phi_r, dphi_r, psi = result.solution
    phi_mol, dphi_mol = _source(solute, mesh, dielectrics)
    traces = NonlocalTraces(
        BoundaryField(mesh, phi_r + phi_mol, "phi"),
        BoundaryField(mesh, dphi_r + dphi_mol, "dphi_dn"),
        BoundaryField(mesh, psi, "psi_cov"),
        dielectrics.eps_p,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearSurfaceWarning)
        phi_reac = interior_reaction_potential(traces, solute, mesh, solute.positions, rule=rule)
    diag = Diagnostics(result.iterations, result.relative_residual, result.residual_history, time.perf_counter() - start)
    return NonlocalSolution(traces, reaction_energy(solute, phi_reac), diag, phi_reac)


def block_residual(solution: NonlocalSolution, solute: Solute, mesh: SurfaceMesh, dielectrics: DielectricModel,
                   rule: int = 3, operators: NonlocalOperators | None = None) -> float:
    """Relative residual of the returned traces in the assembled block system."""
    system = assemble_nonlocal_system(solute, mesh, dielectrics, rule, operators=operators)
    phi_mol, dphi_mol = _source(solute, mesh, dielectrics)
    t = solution.traces
    x = np.concatenate([t.phi.values - phi_mol, t.dphi_dn.values - dphi_mol, t.psi_cov.values])
    return system.residual(x)
