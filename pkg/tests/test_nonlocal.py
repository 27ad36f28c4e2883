import warnings

import numpy as np
import pytest

from biobem import BoundaryField, DielectricModel, Solute, SolverConfig, solve_nonlocal, solve_pcm
from biobem.model import coulomb_at_points
from biobem.nonlocal_solver import (
    NearSurfaceWarning,
    NonlocalTraces,
    assemble_nonlocal_system,
    block_residual,
    interior_reaction_potential,
    laplace_pair,
    nonlocal_operators,
    surface_map_points,
)
from biobem.oracles import kirkwood_energy, nonlocal_sphere_solve
from biobem.model import reaction_energy

from conftest import SHALLOW_CHARGE, SHALLOW_RADIUS, shallow_run, kprime, rotation, sphere

SMALL = Solute.single(1.0, (0, 0, 1.0))
NONLOCAL = DielectricModel(eps_p=1.0, eps_w=80.0, eps_inf=1.8, lambda_w=3.0)


def traces_from_series(mesh, solute, coeffs, flux, eps_p, psi=None):
    r = np.linalg.norm(mesh.centroids, axis=1)
    ct = mesh.centroids[:, 2] / r
    from scipy.special import eval_legendre

    n = np.arange(len(coeffs))
    P = eval_legendre(n[:, None], ct[None, :])
    phi_mol, dphi_mol = coulomb_at_points(solute, mesh.centroids, mesh.normals, eps=eps_p)
    scale = (r[None, :] / r.max()) ** n[:, None]
    return NonlocalTraces(
        BoundaryField(mesh, phi_mol + coeffs @ (scale * P), "phi"),
        BoundaryField(mesh, dphi_mol + flux @ P, "dphi_dn"),
        BoundaryField(mesh, np.zeros(len(mesh)) if psi is None else psi, "psi_cov"),
        eps_p,
    )


def test_manufactured_kirkwood_traces_reproduce_energy():
    mesh = sphere(2.0, 3)
    model = DielectricModel(1.0, 80.0)
    series = nonlocal_sphere_solve(SMALL, 2.0, model, n_max=60)
    traces = traces_from_series(mesh, SMALL, series.reaction_coefficients, series.flux_coefficients, 1.0)
    phi = interior_reaction_potential(traces, SMALL, mesh, SMALL.positions)
    assert reaction_energy(SMALL, phi) == pytest.approx(kirkwood_energy(1, 2, 1, 1, 80), rel=2e-2)


@pytest.mark.parametrize("harmonic", ["constant", "linear"])
def test_green_representation_of_harmonic_functions(harmonic):
    mesh = sphere(2.0, 3)
    solute = Solute.single(1.0, (0.2, 0.1, -0.3))
    phi_mol, dphi_mol = coulomb_at_points(solute, mesh.centroids, mesh.normals, eps=2.0)
    if harmonic == "constant":
        u, du, at = np.ones(len(mesh)), np.zeros(len(mesh)), lambda p: np.ones(len(p))
    else:
        u, du, at = mesh.centroids[:, 2], mesh.normals[:, 2], lambda p: p[:, 2]
    traces = NonlocalTraces(BoundaryField(mesh, phi_mol + u, "phi"), BoundaryField(mesh, dphi_mol + du, "dphi_dn"),
                            BoundaryField(mesh, np.zeros(len(mesh)), "psi_cov"), 2.0)
    points = np.array([[0, 0, 0], [0.3, -0.4, 0.5], [0, 0, -0.8]])
    got = interior_reaction_potential(traces, solute, mesh, points)
    np.testing.assert_allclose(got, at(points), atol=1e-2 * max(1.0, np.abs(at(points)).max()))


def test_reaction_potential_is_linear_in_traces():
    mesh = sphere(2.0, 2)
    sol = solve_nonlocal(SMALL, mesh, NONLOCAL)
    points = np.array([[0, 0, 0], [0, 0, 1.0]])
    warnings.simplefilter("ignore", NearSurfaceWarning)
    base = interior_reaction_potential(sol.traces, SMALL, mesh, points)
    doubled = interior_reaction_potential(sol.traces.scaled(2.0), SMALL.scaled(2.0), mesh, points)
    np.testing.assert_allclose(doubled, 2 * base, rtol=1e-12)


def test_energy_quadratic_in_charge():
    mesh = sphere(2.0, 2)
    ops = nonlocal_operators(mesh, NONLOCAL.screening_length)
    cfg = SolverConfig(rel_tolerance=1e-12)
    e1 = solve_nonlocal(SMALL, mesh, NONLOCAL, cfg, operators=ops).energy
    e3 = solve_nonlocal(SMALL.scaled(-3), mesh, NONLOCAL, cfg, operators=ops).energy
    assert e3 == pytest.approx(9 * e1, rel=1e-10)


def test_block_residual_within_tolerance():
    mesh = sphere(2.0, 2)
    cfg = SolverConfig(rel_tolerance=1e-9)
    ops = nonlocal_operators(mesh, NONLOCAL.screening_length)
    sol = solve_nonlocal(SMALL, mesh, NONLOCAL, cfg, operators=ops)
    assert block_residual(sol, SMALL, mesh, NONLOCAL, operators=ops) <= cfg.rel_tolerance
    assert sol.diagnostics.residual <= cfg.rel_tolerance
    assert not sol.delegated


def test_zero_correlation_length_delegates():
    mesh = sphere(2.0, 2)
    local = DielectricModel(1.0, 80.0, 1.8, 0.0)
    sol = solve_nonlocal(SMALL, mesh, local)
    assert sol.delegated
    assert any("local" in note for note in sol.diagnostics.notes)
    assert sol.energy == solve_pcm(SMALL, mesh, local).energy
    with pytest.raises(ValueError):
        assemble_nonlocal_system(SMALL, mesh, local)


def test_delegated_traces_carry_the_reaction_potential():
    mesh = sphere(2.0, 3)
    sol = solve_nonlocal(SMALL, mesh, DielectricModel(1.0, 80.0))
    phi = interior_reaction_potential(sol.traces, SMALL, mesh, SMALL.positions)
    assert reaction_energy(SMALL, phi) == pytest.approx(sol.energy, rel=2e-2)


def test_negative_parameters_rejected():
    with pytest.raises(ValueError):
        DielectricModel(lambda_w=-1.0)


def test_mismatched_operators_rejected():
    mesh = sphere(2.0, 1)
    ops = nonlocal_operators(mesh, 0.5)
    with pytest.raises(ValueError):
        solve_nonlocal(SMALL, mesh, NONLOCAL, operators=ops)


def test_rigid_motion_invariance():
    mesh = sphere(2.0, 2)
    s = Solute([(0.3, 0.1, -0.5), (-0.4, 0.2, 0.6)], [1.0, -0.5])
    rot = rotation(5)
    cfg = SolverConfig(rel_tolerance=1e-12)
    base = solve_nonlocal(s, mesh, NONLOCAL, cfg).energy
    moved = solve_nonlocal(s.transformed(rot, (-3, 8, 1)), mesh.transformed(rot, (-3, 8, 1)), NONLOCAL, cfg).energy
    assert moved == pytest.approx(base, rel=1e-10)


def test_degenerate_optical_permittivity_is_local():
    # same continuum problem as the local model, discretized differently; the
    # gap is discretization error and closes under refinement
    cfg = SolverConfig(rel_tolerance=1e-12)
    gaps = []
    for k in (2, 3):
        mesh = sphere(2.0, k)
        same = [solve_nonlocal(SMALL, mesh, DielectricModel(1.0, 80.0, 80.0, lam), cfg).energy for lam in (0.5, 20.0)]
        assert same[0] == pytest.approx(same[1], rel=1e-4)
        local = solve_pcm(SMALL, mesh, DielectricModel(1.0, 80.0), cfg, kprime=kprime(2.0, k)).energy
        gaps.append(abs(same[0] / local - 1))
    assert gaps[1] < gaps[0] / 3
    assert gaps[1] < 5e-3


def test_energy_magnitude_decreases_with_correlation_length():
    mesh = sphere(2.0, 3)
    lap = laplace_pair(mesh)
    energies = [solve_nonlocal(SMALL, mesh, NONLOCAL.replace(lambda_w=lam), laplace=lap).energy
                for lam in (0.1, 1.0, 3.0, 10.0)]
    assert np.all(np.diff(np.abs(energies)) < 0)
    oracle = [nonlocal_sphere_solve(SMALL, 2.0, NONLOCAL.replace(lambda_w=lam), n_max=60).energy
              for lam in (0.1, 1.0, 3.0, 10.0)]
    np.testing.assert_allclose(energies, oracle, rtol=2e-2)


def test_near_surface_points_warn():
    mesh = sphere(2.0, 2)
    sol = solve_nonlocal(SMALL, mesh, NONLOCAL)
    with pytest.warns(NearSurfaceWarning):
        interior_reaction_potential(sol.traces, SMALL, mesh, [[0, 0, 1.95]])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        interior_reaction_potential(sol.traces, SMALL, mesh, [[0, 0, 0.0]])


def test_surface_map_points_are_inside():
    mesh = sphere(2.0, 2)
    pts = surface_map_points(mesh)
    assert np.all(mesh.contains(pts))
    np.testing.assert_allclose(np.linalg.norm(pts - mesh.centroids, axis=1), 1e-3 * mesh.diameters)


@pytest.mark.slow
def test_surface_maps_follow_the_sphere_oracle():
    # lambda = 1 sits between the two local maps; lambda = 10 drops below eps_p = 4
    local2 = np.abs(shallow_run(2.0, 0.0)[1]).max()
    local4 = np.abs(shallow_run(4.0, 0.0)[1]).max()
    nl1 = np.abs(shallow_run(2.0, 1.0)[1]).max()
    nl10 = np.abs(shallow_run(2.0, 10.0)[1]).max()
    assert local4 < nl1 < local2
    assert nl10 < local4
    mesh = sphere(SHALLOW_RADIUS, 4)
    ct = mesh.centroids[:, 2] / np.linalg.norm(mesh.centroids, axis=1)
    s = Solute.single(1.0, SHALLOW_CHARGE)
    for lam, value in ((1.0, nl1), (10.0, nl10)):
        ref = nonlocal_sphere_solve(s, SHALLOW_RADIUS, DielectricModel(2, 80, 1.8, lam), n_max=400).surface_map(ct)
        assert value == pytest.approx(np.abs(ref).max(), rel=2e-2)
