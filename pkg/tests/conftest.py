from functools import lru_cache

import numpy as np
import pytest

from biobem import Solute, icosphere
from biobem.operators import adjoint_double_layer


@lru_cache(maxsize=None)
def sphere(radius, subdivisions):
    return icosphere(radius, subdivisions)


@lru_cache(maxsize=None)
def kprime(radius, subdivisions, diagonal="gauss-law"):
    return adjoint_double_layer(sphere(radius, subdivisions), diagonal=diagonal)


def rotation(seed):
    q, r = np.linalg.qr(np.random.default_rng(seed).normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


@pytest.fixture
def born_solute():
    return Solute.single(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# protein-sized sphere: 24 A radius, unit charge 2 A below the surface
SHALLOW_RADIUS = 24.0
SHALLOW_CHARGE = (0.0, 0.0, 22.0)


@lru_cache(maxsize=1)
def _shallow_laplace(subdivisions):
    from biobem.nonlocal_solver import laplace_pair

    return laplace_pair(sphere(SHALLOW_RADIUS, subdivisions), storage="dense")


@lru_cache(maxsize=None)
def shallow_run(eps_p, lambda_w, subdivisions=4):
    """Energy and inward surface map on the 24 A sphere; cached across test modules."""
    from biobem import DielectricModel, solve_nonlocal, solve_pcm
    from biobem.nonlocal_solver import reaction_surface_map
    from biobem.pcm import reaction_potential_surface

    mesh = sphere(SHALLOW_RADIUS, subdivisions)
    solute = Solute.single(1.0, SHALLOW_CHARGE)
    model = DielectricModel(eps_p=eps_p, eps_w=80.0, eps_inf=1.8, lambda_w=lambda_w)
    if lambda_w == 0:
        sol = solve_pcm(solute, mesh, model)
        surface = reaction_potential_surface(sol, mesh).values
    else:
        sol = solve_nonlocal(solute, mesh, model, storage="dense", laplace=_shallow_laplace(subdivisions))
        surface = reaction_surface_map(sol, solute, mesh).values
    return sol.energy, surface, sol.diagnostics


ACCEPTANCE_LINES = []


def verdict(label, ok, detail):
    """Record one acceptance line, then assert it."""
    line = f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, detail


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
