import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biobem import Solute
from biobem.io import (
    InputError,
    RunConfig,
    append_csv_row,
    format_csv,
    load_config,
    load_pqr,
    parse_config,
    parse_pqr_line,
    parse_sphere,
    read_csv,
    save_pqr,
    serialize_config,
    write_csv,
)


def test_one_line_pqr(tmp_path):
    (tmp_path / "a.pqr").write_text("ATOM 1 C RES 1 0.0 0.0 0.0 1.0 2.0\n")
    s = load_pqr(tmp_path / "a.pqr")
    assert len(s) == 1
    np.testing.assert_array_equal(s.positions, [[0, 0, 0]])
    assert s.charges[0] == 1.0 and s.radii[0] == 2.0


def test_remarks_only_is_an_error(tmp_path):
    (tmp_path / "r.pqr").write_text("REMARK nothing here\nREMARK still nothing\nEND\n")
    with pytest.raises(InputError, match="zero atoms"):
        load_pqr(tmp_path / "r.pqr")


def test_dialects_give_identical_solutes(tmp_path):
    plain = (
        "REMARK two atoms\n"
        "ATOM      1  N   ALA     1      -1.000   0.500   2.250 -0.3000 1.8240\n"
        "HETATM    2  O   HOH     2       3.000  -4.000   0.125  0.4170 1.5000\n"
        "TER\nEND\n"
    )
    chained = (
        "ATOM      1  N   ALA A   1      -1.000   0.500   2.250 -0.3000 1.8240\n"
        "HETATM    2  O   HOH B   2       3.000  -4.000   0.125  0.4170 1.5000\n"
    )
    (tmp_path / "plain.pqr").write_text(plain)
    (tmp_path / "chain.pqr").write_text(chained)
    a, b = load_pqr(tmp_path / "plain.pqr"), load_pqr(tmp_path / "chain.pqr")
    assert len(chained.splitlines()[0].split()) == 11
    for attr in ("positions", "charges", "radii"):
        np.testing.assert_array_equal(getattr(a, attr), getattr(b, attr))
    np.testing.assert_array_equal(b.charges, [-0.3, 0.417])


def test_malformed_field_reports_line(tmp_path):
    (tmp_path / "bad.pqr").write_text("REMARK\nATOM 1 C RES 1 0.0 0.0 0.0 1.0 2.0\nATOM 2 C RES 1 0.0 zero 0.0 1.0 2.0\n")
    with pytest.raises(InputError) as err:
        load_pqr(tmp_path / "bad.pqr")
    assert err.value.line == 3 and ":3:" in str(err.value)


@pytest.mark.parametrize("line", ["ATOM 1 2 3", "ATOM 1 C RES 1 0 0 0 1 -2", "ATOM 1 C RES 1 0 0 nan 1 2"])
def test_bad_records(line):
    with pytest.raises(InputError):
        parse_pqr_line(line)


def test_pqr_round_trip(tmp_path):
    s = Solute([(0.1, -2.0 / 3.0, 1e-7), (5, 6, 7)], [0.123456789012345, -1.0], [1.7, 0.0])
    save_pqr(s, tmp_path / "s.pqr")
    back = load_pqr(tmp_path / "s.pqr")
    for attr in ("positions", "charges", "radii"):
        np.testing.assert_array_equal(getattr(back, attr), getattr(s, attr))


def test_minimal_config_uses_defaults():
    cfg = parse_config("dielectric.eps_p = 4\ndielectric.eps_w = 78.5\n")
    assert cfg.dielectrics.eps_p == 4.0 and cfg.dielectrics.eps_w == 78.5
    assert cfg.solver.rel_tolerance == 1e-8 and cfg.rule == 3
    assert cfg.kprime_diagonal == "gauss-law" and not cfg.mesh.given


def test_sections_and_comments():
    text = "# run\n[dielectric]\neps_p = 1  # vacuum-like\n[solver]\ntol = 1e-10\nrestart = 30\n"
    cfg = parse_config(text)
    assert cfg.dielectrics.eps_p == 1.0 and cfg.solver.rel_tolerance == 1e-10 and cfg.solver.restart == 30


@pytest.mark.parametrize(
    "text,line,fragment",
    [
        ("solver.tol = -1\n", 1, "positive"),
        ("dielectric.eps_p = 2\ndielectric.lamda_w = 3\n", 2, "unknown key"),
        ("solver.tol = 1e-8\nsolver.tol = 1e-9\n", 2, "duplicate"),
        ("\n\nsolver.max_iter = 2.5\n", 3, "integer"),
        ("dielectric.eps_w = 1.5\n", 1, "eps_inf"),
        ("nlbc.alpha = -1\n", 1, "alpha"),
        ("quadrature.rule = 5\n", 1, "1, 3 or 7"),
        ("just words\n", 1, "key = value"),
        ("mesh.sphere = 2\n", 1, "sphere"),
        ("nlbc.en_jump_term = maybe\n", 1, "true or false"),
    ],
)
def test_config_errors(text, line, fragment):
    with pytest.raises(InputError) as err:
        parse_config(text, "run.cfg")
    assert err.value.line == line
    assert fragment in str(err.value)


def test_missing_mesh_file(tmp_path):
    with pytest.raises(InputError, match="does not exist"):
        parse_config(f"mesh.file = {tmp_path / 'nope.off'}\n")
    assert parse_config(f"mesh.file = {tmp_path / 'nope.off'}\n", check_files=False).mesh.path


def test_nlbc_params_must_be_complete():
    cfg = parse_config("nlbc.alpha = 0.5\n")
    with pytest.raises(ValueError, match="beta"):
        cfg.nlbc_params()
    full = parse_config("nlbc.alpha = 0.5\nnlbc.beta = 10\nnlbc.gamma = 0.2\nnlbc.mu = 0.1\nnlbc.en_jump_term = yes\n")
    p = full.nlbc_params()
    assert (p.alpha, p.beta, p.gamma, p.mu, p.en_jump_term) == (0.5, 10.0, 0.2, 0.1, True)


def test_sphere_spec():
    assert parse_sphere("2,4") == (2.0, 4, (0.0, 0.0, 0.0))
    assert parse_sphere("24, 3, 0, 0, 1.5") == (24.0, 3, (0.0, 0.0, 1.5))
    for bad in ("2", "2,1,0", "-1,2", "2,1.5"):
        with pytest.raises(ValueError):
            parse_sphere(bad)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(
    eps_p=st.floats(1, 50), eps_inf=st.floats(1, 5), extra=st.floats(0, 100), lam=st.floats(0, 1e4),
    tol=st.floats(1e-15, 1e-2), restart=st.integers(1, 500), damping=st.floats(1e-3, 1.0),
    nlbc=st.dictionaries(st.sampled_from(["alpha", "beta", "gamma", "mu"]), st.floats(0, 1e3)),
    jump=st.booleans(), rule=st.sampled_from([1, 3, 7]), storage=st.sampled_from(["auto", "dense", "matrix-free"]),
    sphere=st.one_of(st.none(), st.tuples(st.floats(0.1, 100), st.integers(0, 6), st.tuples(finite, finite, finite))),
    out=st.one_of(st.none(), st.sampled_from(["out.csv", "results/e.csv"])),
)
def test_config_round_trip(eps_p, eps_inf, extra, lam, tol, restart, damping, nlbc, jump, rule, storage, sphere, out):
    text = (
        f"dielectric.eps_p = {eps_p!r}\ndielectric.eps_inf = {eps_inf!r}\ndielectric.eps_w = {eps_inf + extra!r}\n"
        f"dielectric.lambda_w = {lam!r}\nsolver.tol = {tol!r}\nsolver.restart = {restart}\n"
        f"solver.picard_damping = {damping!r}\nnlbc.en_jump_term = {str(jump).lower()}\nquadrature.rule = {rule}\n"
        f"quadrature.storage = {storage}\n"
    )
    text += "".join(f"nlbc.{k} = {v!r}\n" for k, v in nlbc.items())
    if sphere is not None:
        a, sub, c = sphere
        text += f"mesh.sphere = {a!r},{sub},{c[0]!r},{c[1]!r},{c[2]!r}\n"
    if out is not None:
        text += f"output.out = {out}\n"
    first = parse_config(text)
    again = parse_config(serialize_config(first))
    assert again == first
    assert serialize_config(again) == serialize_config(first)


def test_load_config_file(tmp_path):
    (tmp_path / "run.cfg").write_text("solver.tol = 1e-9\n")
    assert load_config(tmp_path / "run.cfg").solver.rel_tolerance == 1e-9
    assert isinstance(RunConfig(), RunConfig)


def test_csv_round_trip(tmp_path):
    rows = [(1, 0.1, "pcm"), (2, -1.0 / 3.0, "nonlocal"), (3, 1e-300, "")]
    write_csv(rows, ["id", "value", "model"], tmp_path / "a.csv")
    header, back = read_csv(tmp_path / "a.csv")
    assert header == ["id", "value", "model"]
    assert [int(r[0]) for r in back] == [1, 2, 3]
    assert [float(r[1]) for r in back] == [0.1, -1.0 / 3.0, 1e-300]
    assert back[1][2] == "nonlocal"
    assert b"\r" not in (tmp_path / "a.csv").read_bytes()


def test_csv_header_only(tmp_path):
    write_csv([], ["q", "energy_kcal_mol"], tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == "q,energy_kcal_mol\n"


def test_csv_refuses_nan(tmp_path):
    with pytest.raises(ValueError, match="non-finite"):
        write_csv([(1, math.nan)], ["a", "b"], tmp_path / "n.csv")
    assert not (tmp_path / "n.csv").exists()
    with pytest.raises(ValueError):
        format_csv([(1, 2, 3)], ["a", "b"])


def test_csv_mappings_and_append(tmp_path):
    path = tmp_path / "s.csv"
    append_csv_row({"q": -1, "energy": -40.5}, ["q", "energy"], path)
    append_csv_row({"q": 1, "energy": np.float64(-38.25)}, ["q", "energy"], path)
    assert path.read_text() == "q,energy\n-1,-40.5\n1,-38.25\n"


@settings(max_examples=100, deadline=None)
@given(st.lists(finite, min_size=1, max_size=10))
def test_floats_survive_csv_exactly(values):
    text = format_csv([(v,) for v in values], ["x"])
    assert [float(line) for line in text.splitlines()[1:]] == values
