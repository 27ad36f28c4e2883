"""Nonlinear boundary condition for charge-hydration asymmetry.

The surface-charge equation gains a field-dependent diagonal term,

    (I + eps_hat (-1/2 I + K') + diag(h(E_n))) sigma = -eps_hat dphi_coul/dn,
    h(E) = alpha tanh(beta E - gamma) + mu,

where ``E_n = -dphi_coul/dn - K' sigma`` is the normal field just inside the
surface (optionally with the ``-sigma/2`` jump term).  The nonlinearity is
resolved by damped Picard iteration on ``h``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .mesh import SurfaceMesh
from .model import DielectricModel, Solute, reaction_energy
from .operators import BoundaryField, BoundaryOperator, adjoint_double_layer
from .pcm import Diagnostics, check_charges_inside, pcm_system, reaction_potential_at, source_traces
from .solve import SolverConfig, gmres, picard


@dataclass(frozen=True)
class NlbcParams:
    """Closure parameters.  ``beta`` is in inverse reduced-field units."""

    alpha: float
    beta: float
    gamma: float
    mu: float
    en_jump_term: bool = False

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "mu"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    @property
    def is_linear(self) -> bool:
        return self.alpha == 0.0 and self.mu == 0.0


def h_of_en(e_n, params: NlbcParams):
    return params.alpha * np.tanh(params.beta * np.asarray(e_n, dtype=float) - params.gamma) + params.mu


def f_of_en(e_n, params: NlbcParams, eps1: float, eps2: float):
    """``eps1 / (eps2 - eps1) - h(e_n)``; eps1 is the solvent, eps2 the solute."""
    if eps1 == eps2:
        raise ValueError("f is undefined for equal permittivities")
    return eps1 / (eps2 - eps1) - h_of_en(e_n, params)


@dataclass
class NlbcSolution:
    sigma: BoundaryField
    e_n: BoundaryField
    energy: float
    outer_iterations: int
    converged: bool
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    picard_history: list = field(default_factory=list)
    nonlinearity: np.ndarray = None


def normal_field(sigma, kprime: BoundaryOperator, dphi_coul, jump: bool = False) -> np.ndarray:
    """Interior normal field at the centroids for a given surface charge."""
    sigma = np.asarray(sigma, dtype=float)
    e_n = -dphi_coul - kprime.apply(sigma)
    if jump:
        e_n -= 0.5 * sigma
    return e_n


def nonlinear_residual(sigma, kprime, dielectrics: DielectricModel, params: NlbcParams, dphi_coul) -> float:
    """Relative residual of the full nonlinear equation, evaluated from scratch."""
    sigma = np.asarray(sigma, dtype=float)
    h = h_of_en(normal_field(sigma, kprime, dphi_coul, params.en_jump_term), params)
    system = pcm_system(kprime, dielectrics, dphi_coul, extra_diagonal=h)
    return system.residual(sigma)


def solve_nlbc(
    solute: Solute,
    mesh: SurfaceMesh,
    dielectrics: DielectricModel,
    params: NlbcParams,
    config: SolverConfig = SolverConfig(),
    *,
    rule: int = 3,
    storage: str = "auto",
    kprime: BoundaryOperator | None = None,
    kprime_diagonal: str = "gauss-law",
) -> NlbcSolution:
    """Damped Picard iteration around the surface-charge solver."""
    start = time.perf_counter()
    check_charges_inside(solute, mesh)
    _, dphi = source_traces(solute, mesh, eps=dielectrics.eps_p)
    if kprime is None:
        kprime = adjoint_double_layer(mesh, rule, storage, kprime_diagonal)
    inner = {"iterations": 0, "history": []}

    def linearized(h):
        extra = h if np.any(h) else None
        result = gmres(pcm_system(kprime, dielectrics, dphi, extra_diagonal=extra), config)
        inner["iterations"] += result.iterations
        inner["history"] = result.residual_history
        return result.solution[0]

    def update(sigma):
        return h_of_en(normal_field(sigma, kprime, dphi, params.en_jump_term), params)

    h0 = update(np.zeros(len(mesh)))
    out = picard(linearized, update, h0, config)
    sigma = out.state
    e_n = normal_field(sigma, kprime, dphi, params.en_jump_term)
    phi_reac = reaction_potential_at(sigma, mesh, solute.positions, rule)
    diag = Diagnostics(
        inner["iterations"],
        nonlinear_residual(sigma, kprime, dielectrics, params, dphi),
        inner["history"],
        time.perf_counter() - start,
        out.iterations,
    )
    return NlbcSolution(
        BoundaryField(mesh, sigma, "sigma"),
        BoundaryField(mesh, e_n, "phi"),
        reaction_energy(solute, phi_reac),
        out.iterations,
        out.converged,
        diag,
        out.history,
        out.nonlinearity,
    )


@dataclass
class ChargingCurve:
    q: np.ndarray
    energy: np.ndarray
    e_n_max: np.ndarray
    L_plus: float | None
    L_minus: float | None
    phi_static: float | None

    def rows(self):
        return [(float(q), float(e), float(m)) for q, e, m in zip(self.q, self.energy, self.e_n_max)]


def fit_asymmetric_quadratic(q, energy):
    """Least-squares ``(L_plus, L_minus, phi_static)`` for the sign-split quadratic model."""
    q = np.asarray(q, dtype=float)
    energy = np.asarray(energy, dtype=float)
    if np.count_nonzero(q > 0) + np.count_nonzero(q < 0) < 3 or not (np.any(q > 0) and np.any(q < 0)):
        raise ValueError("fit needs charges of both signs and at least three nonzero values")
    half = 0.5 * q * q
    A = np.column_stack([np.where(q > 0, half, 0.0), np.where(q < 0, half, 0.0), q])
    keep = q != 0
    coef, *_ = np.linalg.lstsq(A[keep], energy[keep], rcond=None)
    return tuple(float(c) for c in coef)


def charging_curve(
    solute: Solute,
    mesh: SurfaceMesh,
    dielectrics: DielectricModel,
    params: NlbcParams,
    q_grid,
    config: SolverConfig = SolverConfig(),
    *,
    index: int = 0,
    rule: int = 3,
    storage: str = "auto",
    kprime_diagonal: str = "gauss-law",
) -> ChargingCurve:
    """Energies with charge ``index`` set to every value of ``q_grid``, plus the asymmetric fit.

    The fit parameters are ``None`` when the grid cannot determine them.
    """
    kprime = adjoint_double_layer(mesh, rule, storage, kprime_diagonal)
    qs = np.asarray(q_grid, dtype=float).reshape(-1)
    energies, fields = [], []
    for q in qs:
        charges = np.array(solute.charges)
        charges[index] = q
        sol = solve_nlbc(solute.with_charges(charges), mesh, dielectrics, params, config,
                         rule=rule, storage=storage, kprime=kprime)
        energies.append(sol.energy)
        fields.append(float(np.abs(sol.e_n.values).max()))
    energies = np.array(energies)
    try:
        L_plus, L_minus, phi_static = fit_asymmetric_quadratic(qs, energies)
    except ValueError:
        L_plus = L_minus = phi_static = None
    return ChargingCurve(qs, energies, np.array(fields), L_plus, L_minus, phi_static)
