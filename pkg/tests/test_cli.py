import csv
import io

import pytest

from biobem.cli import convergence_table, main
from biobem.oracles import born_energy, kirkwood_energy


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def files(tmp_path):
    (tmp_path / "born.pqr").write_text("ATOM 1 X ION 1 0.0 0.0 0.0 1.0 2.0\n")
    (tmp_path / "off.pqr").write_text("ATOM 1 X ION 1 0.0 0.0 1.0 1.0 2.0\n")
    (tmp_path / "run.cfg").write_text("dielectric.eps_p = 1\ndielectric.eps_w = 80\n")
    return tmp_path


def test_born_solve(files, capsys):
    code, out, _ = run(["solve", "pcm", "--sphere", "2,3,0,0,0", "--pqr", files / "born.pqr",
                        "--config", files / "run.cfg"], capsys)
    assert code == 0
    (row,) = rows(out)
    assert row["model"] == "pcm" and row["panels"] == "1280"
    assert float(row["energy_kcal_mol"]) == pytest.approx(born_energy(1, 2, 1, 80), rel=0.01)
    assert float(row["residual"]) <= 1e-8


def test_outputs_to_files(files, capsys):
    out_csv, surf, trace = files / "s.csv", files / "surf.csv", files / "trace.csv"
    code, out, _ = run(["solve", "pcm", "--sphere", "2,1", "--pqr", files / "born.pqr", "--config", files / "run.cfg",
                        "--out", out_csv, "--surface-out", surf, "--trace", trace], capsys)
    assert code == 0 and out == ""
    assert len(rows(out_csv.read_text())) == 1
    panels = rows(surf.read_text())
    assert len(panels) == 80 and set(panels[0]) == {"panel_id", "cx", "cy", "cz", "area", "sigma"}
    assert sum(float(p["area"]) * float(p["sigma"]) for p in panels) < 0
    assert len(trace.read_text().splitlines()) >= 2


def test_set_overrides_config(files, capsys):
    base = ["solve", "pcm", "--sphere", "2,1", "--pqr", files / "born.pqr", "--config", files / "run.cfg"]
    _, out80, _ = run(base, capsys)
    _, out2, _ = run(base + ["--set", "dielectric.eps_w=2"], capsys)
    e80, e2 = (float(rows(o)[0]["energy_kcal_mol"]) for o in (out80, out2))
    assert e2 > e80 and e2 < 0


def test_nlbc_requires_parameters(files, capsys):
    code, out, err = run(["solve", "nlbc", "--sphere", "2,1", "--pqr", files / "born.pqr",
                          "--config", files / "run.cfg"], capsys)
    assert code == 1 and out == "" and "nlbc" in err


def test_nlbc_solve(files, capsys):
    code, out, _ = run(["solve", "nlbc", "--sphere", "2,2", "--pqr", files / "born.pqr", "--config", files / "run.cfg",
                        "--set", "nlbc.alpha=0.5", "--set", "nlbc.beta=10", "--set", "nlbc.gamma=0",
                        "--set", "nlbc.mu=0"], capsys)
    assert code == 0
    assert rows(out)[0]["notes"].startswith("picard_outer=")


def test_nonlocal_zero_lambda_delegates(files, capsys):
    code, out, err = run(["solve", "nonlocal", "--sphere", "2,2", "--pqr", files / "born.pqr",
                          "--config", files / "run.cfg"], capsys)
    assert code == 0
    assert "local surface-charge model" in rows(out)[0]["notes"]
    assert "note:" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "pcm", "--sphere", "2,1"],
        ["solve", "pcm", "--pqr", "missing.pqr", "--sphere", "2,1"],
        ["solve", "pcm", "--pqr", "{born}"],
        ["solve", "pcm", "--pqr", "{born}", "--sphere", "2"],
        ["solve", "pcm", "--pqr", "{born}", "--sphere", "2,1", "--set", "solver.tol"],
        ["solve", "pcm", "--pqr", "{born}", "--sphere", "2,1", "--set", "solver.tol=-1"],
        ["solve", "pcm", "--pqr", "{born}", "--sphere", "1,1,0,0,5"],
        ["solve", "pcm", "--pqr", "{born}", "--mesh", "nope.off"],
        ["sweep", "--param", "q", "--values", "a,b", "--pqr", "{born}", "--sphere", "2,1"],
        ["--threads", "0", "oracle", "born", "--radius", "2"],
        ["oracle", "kirkwood", "--radius", "2", "--distance", "3"],
        ["frobnicate"],
    ],
)
def test_bad_input_exits_1(files, capsys, argv):
    argv = [a.replace("{born}", str(files / "born.pqr")) for a in argv]
    code, out, err = run(argv, capsys)
    assert code == 1 and "error" in err


def test_nonconvergence_exits_2(files, capsys):
    trace = files / "t.csv"
    code, _, err = run(["solve", "pcm", "--sphere", "2,2", "--pqr", files / "born.pqr", "--config", files / "run.cfg",
                        "--set", "solver.max_iter=1", "--set", "solver.tol=1e-14", "--trace", trace], capsys)
    assert code == 2 and "not converged" in err
    assert trace.exists()


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0


def test_q_sweep_through_zero(files, capsys):
    code, out, _ = run(["sweep", "--param", "q", "--values=-1,0,1", "--model", "pcm", "--pqr", files / "born.pqr",
                        "--sphere", "2,1", "--config", files / "run.cfg"], capsys)
    assert code == 0
    r = rows(out)
    assert [float(x["value"]) for x in r] == [-1, 0, 1]
    e = [float(x["energy_kcal_mol"]) for x in r]
    assert e[1] == 0.0 and e[0] == pytest.approx(e[2], rel=1e-12) and e[0] < 0


def test_eps_p_sweep_ordering(files, capsys):
    code, out, _ = run(["sweep", "--param", "eps_p", "--values", "1,2,4", "--pqr", files / "off.pqr",
                        "--sphere", "2,2", "--config", files / "run.cfg"], capsys)
    e = [float(x["energy_kcal_mol"]) for x in rows(out)]
    assert code == 0 and e[0] < e[1] < e[2] < 0


def test_lambda_sweep(files, capsys):
    out_csv = files / "lam.csv"
    code, _, _ = run(["sweep", "--param", "lambda_w", "--values", "0,1,10", "--pqr", files / "off.pqr",
                      "--sphere", "2,2", "--config", files / "run.cfg", "--set", "dielectric.eps_inf=1.8",
                      "--out", out_csv], capsys)
    e = [float(x["energy_kcal_mol"]) for x in rows(out_csv.read_text())]
    assert code == 0 and e[0] < e[1] < e[2] < 0


def test_convergence_single_level(files, capsys):
    code, out, _ = run(["convergence", "pcm", "--subdivisions", "2", "--radius", "2", "--pqr", files / "off.pqr",
                        "--config", files / "run.cfg"], capsys)
    (row,) = rows(out)
    assert code == 0 and row["observed_order"] == ""
    assert float(row["error_vs_oracle"]) < 0.05


def test_nonlocal_convergence(files, capsys):
    code, out, _ = run(["convergence", "nonlocal", "--subdivisions", "1,2,3", "--radius", "2",
                        "--pqr", files / "off.pqr", "--config", files / "run.cfg",
                        "--set", "dielectric.lambda_w=3", "--set", "dielectric.eps_inf=1.8"], capsys)
    errors = [float(r["error_vs_oracle"]) for r in rows(out)]
    assert code == 0 and errors[0] > errors[1] > errors[2]


def test_convergence_rejects_off_axis_pairs(files, capsys):
    (files / "two.pqr").write_text("ATOM 1 X A 1 1 0 0 1 1\nATOM 2 X A 1 0 1 0 1 1\n")
    code, _, err = run(["convergence", "pcm", "--subdivisions", "1", "--radius", "2", "--pqr", files / "two.pqr"],
                       capsys)
    assert code == 1 and "oracle" in err


def test_convergence_table_orders():
    table = convergence_table([1.1, 1.025], 1.0, [(80, 1.0), (320, 0.5)])
    assert table[0][3] is None
    assert table[1][3] == pytest.approx(2.0)


def test_oracles(capsys):
    code, out, _ = run(["oracle", "born", "--radius", "2", "--eps-p", "1"], capsys)
    assert code == 0 and float(rows(out)[0]["energy_kcal_mol"]) == pytest.approx(born_energy(1, 2, 1, 80), rel=1e-15)
    _, out, _ = run(["oracle", "kirkwood", "--radius", "24", "--distance", "22"], capsys)
    assert float(rows(out)[0]["energy_kcal_mol"]) == pytest.approx(kirkwood_energy(1, 24, 22, 2, 80), rel=1e-15)
    _, out, _ = run(["oracle", "nonlocal-sphere", "--radius", "24", "--distance", "22", "--lambda-w", "0",
                     "--n-max", "400"], capsys)
    assert float(rows(out)[0]["energy_kcal_mol"]) == pytest.approx(-20.7778577720913, rel=1e-6)
