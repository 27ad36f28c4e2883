"""Semi-analytic reference solutions on spheres.

The nonlocal sphere solver replaces every boundary operator by its action
on zonal harmonics (its "symbol").  Symbols are obtained by quadrature of
the kernel against Legendre polynomials (Funk-Hecke), using the same kernel
conventions as :mod:`biobem.kernels` but none of its panel machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import eval_legendre

from .model import COULOMB_CONSTANT, FOUR_PI, DielectricModel, Solute, to_kcal_per_mol

SYMBOL_NODES = 64


def born_energy(q: float, a: float, eps_p: float, eps_w: float) -> float:
    """Born solvation energy of a central charge, kcal/mol."""
    if not a > 0:
        raise ValueError("radius must be positive")
    return COULOMB_CONSTANT * q * q / (2.0 * a) * (1.0 / eps_w - 1.0 / eps_p)


def kirkwood_terms(q, a, d, eps_p, eps_w, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1, dtype=float)
    pref = COULOMB_CONSTANT * q * q / (2.0 * eps_p * a)
    return pref * (eps_p - eps_w) * (n + 1) / (eps_p * n + eps_w * (n + 1)) * (d / a) ** (2 * n)


def kirkwood_energy(q: float, a: float, d: float, eps_p: float, eps_w: float, tol: float = 1e-12,
                    n_limit: int = 1_000_000) -> float:
    """Single charge at distance ``d`` from the center of a dielectric sphere, kcal/mol.

    Terms are summed until one falls below ``tol`` times the partial sum.
    """
    if not 0 <= d < a:
        raise ValueError(f"need 0 <= d < a, got d={d}, a={a}")
    pref = COULOMB_CONSTANT * q * q / (2.0 * eps_p * a)
    ratio = (d / a) ** 2
    total = 0.0
    power = 1.0
    for n in range(n_limit):
        term = pref * (eps_p - eps_w) * (n + 1) / (eps_p * n + eps_w * (n + 1)) * power
        total += term
        if abs(term) <= tol * abs(total) or term == 0.0:
            return total
        power *= ratio
    raise ArithmeticError("Kirkwood series did not converge")


def asym_quadratic_model(q: float, L_plus: float, L_minus: float, phi_static: float) -> float:
    """Piecewise charging energy ``L q^2 / 2 + phi_static q`` with sign-dependent ``L``."""
    if q == 0:
        return 0.0
    L = L_plus if q > 0 else L_minus
    return 0.5 * L * q * q + phi_static * q


# --------------------------------------------------------------------------
# operator symbols on a sphere
# --------------------------------------------------------------------------


def _polar_nodes(a: float, lengthscale: float | None):
    """Composite Gauss-Legendre nodes on [0, pi], graded towards 0 for short Yukawa lengths."""
    x, w = np.polynomial.legendre.leggauss(SYMBOL_NODES)
    breaks = [0.0]
    if lengthscale is not None:
        t = 1e-3 * lengthscale / a
        while t < math.pi / 4:
            breaks.append(t)
            t *= 2.0
    breaks += [b for b in (math.pi / 4, math.pi / 2, 3 * math.pi / 4) if b > breaks[-1]]
    breaks.append(math.pi)
    nodes, weights = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        nodes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass(frozen=True)
class HarmonicSymbolTable:
    """Per-degree eigenvalues of the boundary operators on a sphere of radius ``a``."""

    a: float
    lengthscale: float | None
    V_L: np.ndarray
    K_L: np.ndarray
    Kp_L: np.ndarray
    V_Y: np.ndarray
    K_Y: np.ndarray

    @property
    def n_max(self) -> int:
        return len(self.V_L) - 1


@lru_cache(maxsize=64)
def harmonic_symbols(a: float, lengthscale: float | None, n_max: int) -> HarmonicSymbolTable:
    """Funk-Hecke integrals ``2 pi a^2 int k(theta) P_n(cos theta) sin(theta) dtheta``.

    Kernels are written with the ``sin(theta) / d`` factor cancelled so the
    integrands stay bounded at ``theta = 0``.
    """
    theta, w = _polar_nodes(a, lengthscale)
    half = 0.5 * theta
    d = 2.0 * a * np.sin(half)
    sin_over_d = np.cos(half) / a  # sin(theta) / d
    n = np.arange(n_max + 1)
    P = eval_legendre(n[:, None], np.cos(theta)[None, :])
    pref = 2.0 * math.pi * a * a

    def project(values):
        return pref * (P * (values * w)[None, :]).sum(axis=1)

    # single layer: 1/(4 pi d); double layers on a sphere: -1/(8 pi a d)
    V_L = project(sin_over_d / FOUR_PI)
    K_L = project(-sin_over_d / (8.0 * math.pi * a))
    Kp_L = K_L.copy()
    if lengthscale is None:
        V_Y, K_Y = V_L.copy(), K_L.copy()
    else:
        decay = np.exp(-d / lengthscale)
        V_Y = project(sin_over_d * decay / FOUR_PI)
        K_Y = project(-sin_over_d * decay * (1.0 + d / lengthscale) / (8.0 * math.pi * a))
    for arr in (V_L, K_L, Kp_L, V_Y, K_Y):
        arr.setflags(write=False)
    return HarmonicSymbolTable(a, lengthscale, V_L, K_L, Kp_L, V_Y, K_Y)


# --------------------------------------------------------------------------
# nonlocal sphere
# --------------------------------------------------------------------------


@dataclass
class SphereSolution:
    energy: float
    reaction_coefficients: np.ndarray  # reaction-potential trace per degree
    flux_coefficients: np.ndarray
    a: float
    truncation_estimate: float

    def surface_map(self, cos_theta) -> np.ndarray:
        """Reaction potential on the sphere (reduced units) at polar cosines."""
        n = np.arange(len(self.reaction_coefficients))
        P = eval_legendre(n[:, None], np.asarray(cos_theta, dtype=float).reshape(1, -1))
        return self.reaction_coefficients @ P

    def interior_potential(self, z) -> np.ndarray:
        """Reaction potential on the symmetry axis at signed heights ``z``."""
        n = np.arange(len(self.reaction_coefficients))
        z = np.asarray(z, dtype=float).reshape(-1)
        return ((z[:, None] / self.a) ** n[None, :]) @ self.reaction_coefficients


def _axis_heights(solute: Solute, center, axis):
    rel = solute.positions - np.asarray(center, dtype=float)
    if axis is None:
        norms = np.linalg.norm(rel, axis=1)
        axis = rel[int(np.argmax(norms))] if norms.max() > 0 else np.array([0.0, 0.0, 1.0])
    axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    z = rel @ axis
    off = np.linalg.norm(rel - z[:, None] * axis[None, :], axis=1)
    if np.any(off > 1e-9 * max(1.0, float(np.abs(z).max()))):
        raise ValueError("all charges must lie on one axis through the sphere center")
    return z


def nonlocal_sphere_solve(
    solute: Solute,
    a: float,
    dielectrics: DielectricModel,
    n_max: int = 50,
    center=(0.0, 0.0, 0.0),
    axis=None,
) -> SphereSolution:
    """Per-degree solution of the three-field nonlocal system on a sphere.

    For every degree the three boundary unknowns (reaction potential, its
    normal derivative and the scaled auxiliary potential) solve a 3x3 system
    built from operator symbols.  ``lambda_w = 0`` or ``eps_inf = eps_w``
    give the local model.
    """
    z = _axis_heights(solute, center, axis)
    if np.any(np.abs(z) >= a):
        raise ValueError("charges must lie strictly inside the sphere")
    q = solute.charges
    eps_p, eps_w, eps_inf = dielectrics.eps_p, dielectrics.eps_w, dielectrics.eps_inf
    n = np.arange(n_max + 1)
    # Coulomb source in the solute dielectric, expanded in P_n(cos theta) on r = a
    c = (q[None, :] * (z[None, :] / a) ** n[:, None]).sum(axis=1) / (FOUR_PI * eps_p * a)
    dc = -(n + 1.0) / a * c
    Lam = dielectrics.screening_length
    phi = np.empty(n_max + 1)
    dphi = np.empty(n_max + 1)
    if Lam == 0.0:
        sym = harmonic_symbols(float(a), None, n_max)
        for k in range(n_max + 1):
            v, kk = sym.V_L[k], sym.K_L[k]
            A = np.array([[0.5 + kk, -v], [0.5 - kk, (eps_p / eps_w) * v]])
            rhs = np.array([0.0, -(0.5 - kk) * c[k] - (eps_p / eps_w) * v * dc[k]])
            phi[k], dphi[k] = np.linalg.solve(A, rhs)
    else:
        sym = harmonic_symbols(float(a), float(Lam), n_max)
        for k in range(n_max + 1):
            vl, kl, vy, ky = sym.V_L[k], sym.K_L[k], sym.V_Y[k], sym.K_Y[k]
            vdr, kdr = vy - vl, ky - kl
            A = np.array(
                [
                    [0.5 - ky, (eps_p / eps_inf) * vy - (eps_p / eps_w) * vdr, (eps_inf / eps_w) * kdr],
                    [0.5 + kl, -vl, 0.0],
                    [0.0, (eps_p / eps_inf) * vl, 0.5 - kl],
                ]
            )
            xi = -(0.5 - ky + (eps_p / eps_w) * kdr) * c[k] - ((eps_p / eps_inf) * vy - (eps_p / eps_w) * vdr) * dc[k]
            phi[k], dphi[k], _ = np.linalg.solve(A, np.array([xi, 0.0, 0.0]))
    pot = ((z[:, None] / a) ** n[None, :]) @ phi
    energy = float(to_kcal_per_mol(0.5 * np.dot(q, pot)))
    zmax = float(np.abs(z).max())
    tail = abs(phi[-1]) * (zmax / a) ** n_max * float(np.abs(q).sum())
    return SphereSolution(energy, phi, dphi, float(a), float(to_kcal_per_mol(0.5 * tail)))


def nonlocal_sphere_energy(solute: Solute, a: float, dielectrics: DielectricModel, n_max: int = 50, **kw):
    """Energy (kcal/mol) and solution object of :func:`nonlocal_sphere_solve`."""
    sol = nonlocal_sphere_solve(solute, a, dielectrics, n_max, **kw)
    return sol.energy, sol
