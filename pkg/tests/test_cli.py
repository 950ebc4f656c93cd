import json
import subprocess
import sys

import numpy as np
import pytest

from normal_torsion.cli import ConfigError, RunConfig, main
from normal_torsion.disc_grid import build_grid
from normal_torsion.export import read_field_csv, read_grassmann_csv, write_grassmann_csv


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out


def summary(out):
    return json.loads(out.out)


def test_list_surfaces(capsys):
    code, out = run(capsys, "--list-surfaces")
    assert code == 0
    assert "clifford_torus" in out.out and "complex_curve" in out.out


def test_missing_command(capsys):
    code, out = run(capsys, )
    assert code == 2 and "command is required" in out.err


@pytest.mark.parametrize(
    "argv",
    [
        ["compute", "--M", "8"],
        ["compute", "--M", "7"],
        ["compute", "--surface", "sphere"],
        ["compute", "--surface", "clifford_torus", "--n", "3"],
        ["compute", "--surface", "complex_curve", "--param", "bogus=1"],
        ["compute", "--param", "novalue"],
        ["optimize", "--tol", "-1"],
        ["solve", "--s-zero"],
        ["solve", "--manufactured", "--n", "4"],
        ["solve", "--s-from", "/nonexistent/dir", "--n", "3"],
    ],
)
def test_config_errors_exit_2(capsys, tmp_path, argv):
    code, out = run(capsys, *argv, "--out", str(tmp_path / "o"))
    assert code == 2 and "config error" in out.err
    assert not (tmp_path / "o").exists()


def test_bad_thread_setting(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("NORMAL_TORSION_THREADS", "zero")
    code, _ = run(capsys, "compute", "--M", "9", "--out", str(tmp_path))
    assert code == 2


def test_thread_setting_is_applied(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("NORMAL_TORSION_THREADS", "1")
    code, _ = run(capsys, "compute", "--M", "9", "--out", str(tmp_path))
    assert code == 0


def test_run_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown configuration keys"):
        RunConfig.from_mapping({"command": "compute", "colour": "red"})
    with pytest.raises(ConfigError, match="missing command"):
        RunConfig.from_mapping({"M": 33})
    assert RunConfig.from_mapping({"command": "verify", "wente": True}).wente


def test_compute_clifford_torus(capsys, tmp_path):
    code, out = run(capsys, "compute", "--surface", "clifford_torus", "--M", "65", "--out", str(tmp_path))
    assert code == 0
    s = summary(out)
    assert s["T_X"] < 1e-6 and s["S_sup"] < 1e-10
    assert s["conformal"]["conformal"]
    assert json.loads((tmp_path / "summary.json").read_text()) == s


def test_compute_complex_curve_files(capsys, tmp_path):
    code, out = run(capsys, "compute", "--M", "33", "--out", str(tmp_path))
    assert code == 0
    assert summary(out)["S_sup"] == pytest.approx(8.0, rel=1e-2)
    names = {p.name for p in tmp_path.iterdir()}
    expected = {"summary.json", "metric_h11.csv", "metric_h12.csv", "metric_h22.csv", "conformal_defect.csv",
                "torsion_1_1_2.csv", "torsion_2_1_2.csv", "s_1_2.csv"}
    assert expected <= names
    header = (tmp_path / "s_1_2.csv").read_text().splitlines()[0]
    assert header == "u,v,value"


def test_compute_plane_all_zero(capsys, tmp_path):
    code, out = run(capsys, "compute", "--surface", "plane_embed", "--n", "3", "--M", "33", "--out", str(tmp_path))
    s = summary(out)
    assert code == 0 and s["T_X"] == 0.0 and s["S_sup"] == 0.0
    g = build_grid(33)
    for name in ("s_1_2", "s_1_3", "s_2_3", "torsion_1_2_3"):
        assert np.all(read_field_csv(tmp_path / f"{name}.csv", g) == 0.0)


def test_compute_complex_coefficients(capsys, tmp_path):
    code, out = run(capsys, "compute", "--param", "coeffs=0,0,1j", "--M", "17", "--out", str(tmp_path))
    assert code == 0 and summary(out)["S_sup"] > 0


def test_compute_is_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["compute", "--surface", "lifted_complex_curve", "--M", "17", "--out", str(tmp_path / d)]) == 0
    capsys.readouterr()
    for name in ("summary.json", "s_2_3.csv", "torsion_1_1_3.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_optimize_perturbed_torus(capsys, tmp_path):
    code, out = run(capsys, "optimize", "--surface", "clifford_torus", "--perturb", "5", "--M", "33",
                    "--out", str(tmp_path))
    s = summary(out)
    assert code == 0 and s["converged"] and s["T_X"] < 1e-6 < s["T_X_initial"]
    log = [json.loads(x) for x in (tmp_path / "descent.jsonl").read_text().splitlines()]
    assert len(log) == s["iterations"] + 1
    assert all(b["T_X"] <= a["T_X"] for a, b in zip(log, log[1:]))
    assert (tmp_path / "frame_2_4.csv").exists()


def test_optimize_already_critical(capsys, tmp_path):
    code, out = run(capsys, "optimize", "--surface", "clifford_torus", "--M", "17", "--out", str(tmp_path))
    assert code == 0 and summary(out)["iterations"] == 0
    assert len((tmp_path / "descent.jsonl").read_text().splitlines()) == 1


def test_optimize_complex_curve(capsys, tmp_path):
    code, out = run(capsys, "optimize", "--tol", "1e-4", "--M", "65", "--out", str(tmp_path))
    s = summary(out)
    assert code == 0
    assert sum(s["residual_interior"]) + sum(s["residual_boundary"]) < 1e-4
    assert (tmp_path / "descent.jsonl").exists()


def test_optimize_unconverged_exit_3(capsys, tmp_path):
    code, out = run(capsys, "optimize", "--max-iters", "1", "--tol", "1e-12", "--M", "17", "--out", str(tmp_path))
    assert code == 3 and not summary(out)["converged"]


def test_verify_complex_curve(capsys, tmp_path):
    code, out = run(capsys, "verify", "--tol", "1e-4", "--M", "65", "--out", str(tmp_path))
    s = summary(out)
    assert code == 0
    assert all(b["pass"] for b in s["bounds"])
    names = {b["name"] for b in s["bounds"]}
    assert {"lower_bound_nonconstant", "small_solution_upper_bound", "linfty_bound_primary",
            "linfty_bound_alternative", "z_sup_bound"} <= names


def test_verify_flat_not_applicable(capsys, tmp_path):
    code, out = run(capsys, "verify", "--surface", "clifford_torus", "--M", "17", "--out", str(tmp_path))
    s = summary(out)
    assert code == 0
    lower = next(b for b in s["bounds"] if b["name"] == "lower_bound")
    assert lower["applicable"] is False


def test_verify_wente(capsys, tmp_path):
    code, out = run(capsys, "verify", "--wente", "--trials", "20", "--seed", "7", "--M", "33",
                    "--out", str(tmp_path))
    s = summary(out)
    assert code == 0 and s["violations"] == 0 and s["trials"] == 20
    assert json.loads((tmp_path / "verify.json").read_text()) == s


def test_verify_wente_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        main(["verify", "--wente", "--trials", "5", "--seed", "7", "--M", "17", "--out", str(tmp_path / d)])
    capsys.readouterr()
    assert (tmp_path / "a" / "verify.json").read_bytes() == (tmp_path / "b" / "verify.json").read_bytes()


def test_solve_manufactured(capsys, tmp_path):
    code, out = run(capsys, "solve", "--manufactured", "--n", "3", "--M", "65", "--out", str(tmp_path))
    s = summary(out)
    assert code == 0 and s["recovery_error"] < 1e-3
    assert {"g_1_2.csv", "g_1_3.csv", "g_2_3.csv", "system_report.json"} <= {p.name for p in tmp_path.iterdir()}


def test_solve_zero(capsys, tmp_path):
    code, out = run(capsys, "solve", "--s-zero", "--n", "4", "--M", "17", "--out", str(tmp_path))
    assert code == 0 and summary(out)["G_sup"] == 0.0
    assert summary(out)["report"]["iterations"] == 1


def test_solve_complex_curve(capsys, tmp_path):
    code, out = run(capsys, "solve", "--surface", "complex_curve", "--M", "33", "--out", str(tmp_path))
    assert code == 0 and summary(out)["report"]["converged"]


def test_solve_from_csv(capsys, tmp_path):
    g = build_grid(17)
    S = 0.5 * np.stack([np.cos(g.u), g.v, g.u * g.v])
    write_grassmann_csv(tmp_path / "in", g, S, prefix="s")
    np.testing.assert_array_equal(read_grassmann_csv(tmp_path / "in", g, 3), S)
    code, out = run(capsys, "solve", "--s-from", str(tmp_path / "in"), "--n", "3", "--M", "17",
                    "--out", str(tmp_path / "out"))
    assert code == 0 and summary(out)["source"].startswith("csv:")


def test_solve_from_csv_grid_mismatch(capsys, tmp_path):
    write_grassmann_csv(tmp_path, build_grid(17), np.zeros((1, build_grid(17).n_nodes)), prefix="s")
    code, out = run(capsys, "solve", "--s-from", str(tmp_path), "--n", "2", "--M", "33", "--out", str(tmp_path / "o"))
    assert code == 2


def test_solve_blow_up_exit_3(capsys, tmp_path):
    g = build_grid(17)
    write_grassmann_csv(tmp_path / "in", g, 4000.0 * np.stack([np.cos(g.u), g.v, g.u * g.v]), prefix="s")
    code, out = run(capsys, "solve", "--s-from", str(tmp_path / "in"), "--n", "3", "--M", "17",
                    "--out", str(tmp_path / "out"))
    assert code == 3 and "numerical failure" in out.err
    assert "history" in json.loads((tmp_path / "out" / "system_report.json").read_text())


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "normal_torsion", "--list-surfaces"], capture_output=True, text=True)
    assert proc.returncode == 0 and "scaled_graph" in proc.stdout
