import json

import pytest

from efiepc.cli import main
from efiepc.mesh import icosphere, write_rawtri


def _run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_cost_prints_total(capsys):
    code, out, _ = _run(capsys, ["cost", "--tpc", "1", "--nitr", "0", "--nrhs", "0",
                                 "--tpcsol", "0", "--tmmv", "0"])
    assert code == 0 and float(out) == 1.0


def test_cost_hours_and_speedup(capsys):
    argv = ["cost", "--tpc", "842.6682", "--nitr", "843", "--nrhs", "180",
            "--tpcsol", "0.611366", "--tmmv", "1.450142", "--hours"]
    code, out, _ = _run(capsys, argv)
    assert float(out) == pytest.approx(87.1266, rel=1e-5)
    code, out, _ = _run(capsys, ["cost", "--tpc", "1", "--nitr", "1", "--nrhs", "1",
                                 "--tpcsol", "1", "--tmmv", "1",
                                 "--baseline-tpc", "6", "--baseline-nitr", "1",
                                 "--baseline-nrhs", "1", "--baseline-tpcsol", "1",
                                 "--baseline-tmmv", "1"])
    assert out.splitlines() == ["3.0", "speedup 2.6666666666666665"]


def test_cost_rejects_negative(capsys):
    code, _, err = _run(capsys, ["cost", "--tpc", "-1", "--nitr", "1", "--nrhs", "1",
                                 "--tpcsol", "1", "--tmmv", "1"])
    assert code == 1 and "non-negative" in err


def test_mesh_info_icosahedron(capsys, tmp_path):
    path = tmp_path / "ico.tri"
    write_rawtri(icosphere(1.0, 0), path)
    code, out, _ = _run(capsys, ["mesh-info", "--geometry", "file", "--mesh", str(path),
                                 "-o", str(tmp_path)])
    stats = json.loads(out)
    assert code == 0
    assert stats["rwg_bases"] == 30 and stats["triangles"] == 20
    assert (tmp_path / "manifest.json").exists()


def test_missing_mesh_file(capsys, tmp_path):
    code, _, err = _run(capsys, ["mesh-info", "--geometry", "file",
                                 "--mesh", str(tmp_path / "nope.msh")])
    assert code == 1 and "not found" in err


def test_bad_arguments(capsys):
    code, _, _ = _run(capsys, ["solve", "--precond", "ilut"])
    assert code == 1
    assert main(["frobnicate"]) == 2
    capsys.readouterr()


def test_small_solve_writes_artifacts(capsys, tmp_path):
    code, out, _ = _run(capsys, ["solve", "--geometry", "plate", "--side-wavelengths", "0.5",
                                 "--precond", "tri", "-o", str(tmp_path)])
    report = json.loads(out)
    assert code == 0 and report["converged"]
    assert report["true_residual"] <= 1e-5
    lines = (tmp_path / "residuals.csv").read_text().splitlines()
    assert len(lines) == report["iterations"] + 1
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["precond"] == "tri"


def test_rcs_small_sphere(capsys, tmp_path):
    code, out, _ = _run(capsys, ["rcs", "--geometry", "sphere", "--radius-wavelengths", "0.2",
                                 "--h-wavelengths", "0.1", "--precond", "block",
                                 "--num-angles", "37", "-o", str(tmp_path)])
    result = json.loads(out)
    assert code == 0
    assert result["mie_compare"]["rms_db"] < 1.0
    assert (tmp_path / "rcs.csv").exists() and (tmp_path / "rcs_mie.csv").exists()


def test_eigs_and_assemble(capsys, tmp_path):
    base = ["--geometry", "plate", "--side-wavelengths", "0.5", "-o", str(tmp_path)]
    code, out, _ = _run(capsys, ["eigs", "--precond", "tri"] + base)
    assert code == 0 and json.loads(out)["N"] > 0
    assert (tmp_path / "spectrum.csv").exists()
    code, out, _ = _run(capsys, ["assemble", "--precond", "block", "--write-matrix"] + base)
    assert code == 0
    assert json.loads(out)["preconditioner"]["pattern"]["nnz"] > 0
    assert (tmp_path / "pattern.csv").exists() and (tmp_path / "preconditioner.mtx").exists()


def test_eigs_cap(capsys, tmp_path):
    code, _, err = _run(capsys, ["eigs", "--geometry", "plate", "--side-wavelengths", "0.5",
                                 "--cap", "10", "-o", str(tmp_path)])
    assert code == 1 and "cap" in err


def test_bench(capsys, tmp_path):
    code, out, _ = _run(capsys, ["bench", "--sizes", "0.6", "0.8", "1.0", "1.2",
                                 "--h-wavelengths", "0.2", "--repeats", "1", "-o", str(tmp_path)])
    assert code == 0 and len(json.loads(out)["N"]) == 4
    code, _, err = _run(capsys, ["bench", "--sizes", "1", "2", "-o", str(tmp_path)])
    assert code == 1 and "four" in err
