"""Domain types, units and free-space Coulomb sources.

Internally every potential is in reduced units: the free-space kernel is
``1/(4 pi r)``, permittivities are relative and the vacuum permittivity is
absorbed (set to one).  Charges are in elementary charges and lengths in
Angstrom.  The only place where reduced energies are turned into kcal/mol is
:func:`to_kcal_per_mol`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

COULOMB_CONSTANT = 332.0636  # kcal * Angstrom / (mol * e^2)
ENERGY_CONVERSION = 4.0 * math.pi * COULOMB_CONSTANT

FOUR_PI = 4.0 * math.pi


class BemError(Exception):
    """Base class for all errors raised by the package."""


class SingularityError(BemError, ValueError):
    """A kernel or Coulomb sum was evaluated at its source point."""


class BemWarning(UserWarning):
    """Base class for numerical warnings."""


def to_kcal_per_mol(reduced_energy):
    """Convert an energy computed with the ``1/(4 pi r)`` kernel to kcal/mol."""
    return ENERGY_CONVERSION * reduced_energy


@dataclass(frozen=True)
class PointCharge:
    position: tuple[float, float, float]
    charge: float
    radius: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.position) or len(self.position) != 3:
            raise ValueError(f"invalid charge position {self.position!r}")
        if not math.isfinite(self.charge):
            raise ValueError("charge must be finite")
        if not (self.radius >= 0.0):
            raise ValueError("radius must be >= 0")


@dataclass(frozen=True, eq=False)
class Solute:
    """Point charges with per-atom radii.

    Parameters
    ----------
    positions : (n, 3) array_like
        Charge locations in Angstrom.
    charges : (n,) array_like
        Charge magnitudes in e.
    radii : (n,) array_like, optional
        Atomic radii in Angstrom (defaults to zeros).
    radius_scale : float
        Multiplier applied by :meth:`scaled_radii` when building surfaces.
    """

    positions: np.ndarray
    charges: np.ndarray
    radii: np.ndarray = None
    radius_scale: float = 1.0
    names: tuple = field(default=())

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        q = np.array(self.charges, dtype=float).reshape(-1)
        if pos.shape[0] != q.shape[0]:
            raise ValueError("positions and charges differ in length")
        radii = np.zeros_like(q) if self.radii is None else np.array(self.radii, dtype=float).reshape(-1)
        if radii.shape != q.shape:
            raise ValueError("radii and charges differ in length")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(q))):
            raise ValueError("positions and charges must be finite")
        if np.any(radii < 0) or not np.all(np.isfinite(radii)):
            raise ValueError("radii must be finite and >= 0")
        if not (self.radius_scale > 0):
            raise ValueError("radius_scale must be positive")
        for arr in (pos, q, radii):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "charges", q)
        object.__setattr__(self, "radii", radii)

    @classmethod
    def from_charges(cls, charges: Iterable[PointCharge], radius_scale: float = 1.0) -> "Solute":
        charges = list(charges)
        return cls(
            positions=[c.position for c in charges],
            charges=[c.charge for c in charges],
            radii=[c.radius for c in charges],
            radius_scale=radius_scale,
        )

    @classmethod
    def single(cls, charge: float, position: Sequence[float] = (0.0, 0.0, 0.0), radius: float = 0.0) -> "Solute":
        return cls(positions=[position], charges=[charge], radii=[radius])

    def __len__(self):
        return self.charges.shape[0]

    def __iter__(self):
        for p, q, r in zip(self.positions, self.charges, self.radii):
            yield PointCharge(tuple(float(c) for c in p), float(q), float(r))

    def scaled_radii(self) -> np.ndarray:
        return self.radii * self.radius_scale

    def with_charges(self, charges) -> "Solute":
        return Solute(self.positions, charges, self.radii, self.radius_scale, self.names)

    def scaled(self, factor: float) -> "Solute":
        """Same solute with every charge multiplied by ``factor``."""
        return self.with_charges(self.charges * factor)

    def transformed(self, rotation=None, translation=(0.0, 0.0, 0.0)) -> "Solute":
        rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
        pos = self.positions @ rot.T + np.asarray(translation, dtype=float)
        return Solute(pos, self.charges, self.radii, self.radius_scale, self.names)


@dataclass(frozen=True)
class DielectricModel:
    """Continuum parameters.

    ``eps_p`` is the solute (region II) permittivity, ``eps_w`` the bulk
    solvent (region I) permittivity, ``eps_inf`` the short-range optical
    permittivity of the Lorentz model and ``lambda_w`` its correlation
    length in Angstrom.
    """

    eps_p: float = 2.0
    eps_w: float = 80.0
    eps_inf: float = 1.8
    lambda_w: float = 0.0

    def __post_init__(self):
        for name in ("eps_p", "eps_w", "eps_inf", "lambda_w"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.eps_p < 1.0:
            raise ValueError(f"eps_p must be >= 1, got {self.eps_p}")
        if not (self.eps_w >= self.eps_inf >= 1.0):
            raise ValueError(f"need eps_w >= eps_inf >= 1, got eps_w={self.eps_w}, eps_inf={self.eps_inf}")
        if self.lambda_w < 0.0:
            raise ValueError(f"lambda_w must be >= 0, got {self.lambda_w}")

    @property
    def screening_length(self) -> float:
        """The rescaled Yukawa length ``lambda_w * sqrt(eps_inf / eps_w)``."""
        return self.lambda_w * math.sqrt(self.eps_inf / self.eps_w)

    @property
    def eps_hat(self) -> float:
        """Contrast ``(eps_p - eps_w) / eps_p`` of the surface-charge equation."""
        return (self.eps_p - self.eps_w) / self.eps_p

    def replace(self, **changes) -> "DielectricModel":
        values = dict(eps_p=self.eps_p, eps_w=self.eps_w, eps_inf=self.eps_inf, lambda_w=self.lambda_w)
        values.update(changes)
        return DielectricModel(**values)


def _displacements(solute: Solute, point) -> tuple[np.ndarray, np.ndarray]:
    point = np.asarray(point, dtype=float)
    diff = point - solute.positions
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if np.any(dist == 0.0):
        raise SingularityError(f"evaluation point {point.tolist()} coincides with a charge")
    return diff, dist


def coulomb_potential(charges: Solute, point, eps: float = 1.0) -> float:
    """Free-space potential ``sum_i q_i / (4 pi eps |point - r_i|)``."""
    _, dist = _displacements(charges, point)
    return float(np.sum(charges.charges / dist) / (FOUR_PI * eps))


def coulomb_field_normal(charges: Solute, point, normal, eps: float = 1.0) -> float:
    """Derivative of :func:`coulomb_potential` along ``normal`` at ``point``."""
    normal = np.asarray(normal, dtype=float)
    if abs(np.linalg.norm(normal) - 1.0) > 1e-12:
        raise ValueError("normal must be a unit vector")
    diff, dist = _displacements(charges, point)
    return float(-np.sum(charges.charges * (diff @ normal) / dist**3) / (FOUR_PI * eps))


def coulomb_at_points(charges: Solute, points, normals=None, eps: float = 1.0):
    """Vectorized Coulomb potential (and normal derivative) at many points.

    Returns ``phi`` or ``(phi, dphi_dn)`` when ``normals`` is given.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    diff = points[:, None, :] - charges.positions[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if np.any(dist == 0.0):
        raise SingularityError("an evaluation point coincides with a charge")
    phi = (charges.charges / dist).sum(axis=1) / (FOUR_PI * eps)
    if normals is None:
        return phi
    normals = np.asarray(normals, dtype=float).reshape(-1, 3)
    proj = np.einsum("ijk,ik->ij", diff, normals)
    dphi = -(charges.charges * proj / dist**3).sum(axis=1) / (FOUR_PI * eps)
    return phi, dphi


def reaction_energy(charges: Solute, reaction_potential) -> float:
    """``1/2 sum_i q_i phi_reac(r_i)`` converted to kcal/mol."""
    return float(to_kcal_per_mol(0.5 * np.dot(charges.charges, reaction_potential)))
