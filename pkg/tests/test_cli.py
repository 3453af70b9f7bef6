import io
import subprocess
import sys

import numpy as np
import pytest

from splinekit import cli, mesh


def run(*argv):
    buf = io.StringIO()
    code = cli.run([str(a) for a in argv], stdout=buf)
    return code, buf.getvalue()


def kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line and not line.startswith("#"))


@pytest.fixture(scope="module")
def meshes(tmp_path_factory):
    d = tmp_path_factory.mktemp("meshes")
    mesh.save_mesh(mesh.two_triangle_square(), d / "two_tri.msh")
    mesh.save_mesh(mesh.square_grid(4), d / "square32.msh")
    return d


def test_dim_example(meshes):
    code, out = run("dim", "--mesh", meshes / "two_tri.msh", "--d", 1, "--r", 1)
    assert code == 0
    rep = kv(out)
    assert rep["L"] == "3" and rep["U"] == "3" and rep["rank_dim"] == "3"


def test_poisson_example(meshes):
    code, out = run("poisson", "--mesh", meshes / "square32.msh", "--d", 8, "--r", 1, "--exact", "sin2pi")
    assert code == 0
    header, row = out.strip().splitlines()
    rec = dict(zip(header.split(","), row.split(",")))
    assert rec["exact"] == "sin2pi" and rec["n_triangles"] == "32"
    assert 0 < float(rec["RMSE"]) < 1e-4


def test_bench_example():
    code, out = run("bench", "--sizes", "10,100")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "function,n=10,n=100"
    vals = np.array([[float(v) for v in ln.split(",")[1:]] for ln in lines[1:]])
    assert vals.shape == (10, 2) and np.all(vals >= 0)


def test_usage_errors(capsys):
    assert run("dim", "--bogus")[0] == 1
    assert run("nosuchcommand")[0] == 1
    assert run("dim", "--mesh", "no_such_mesh")[0] == 1
    assert run("dim", "--mesh", "/nonexistent/file.msh")[0] == 1
    assert run("fit", "--target", "f99")[0] == 1
    assert run("bench", "--sizes", "ten")[0] == 1
    assert run("lkb", "build")[0] == 1
    assert run("dim", "--threads", 0)[0] == 1
    assert run("dim", "--d", 3, "--r", 5)[0] == 1
    assert run()[0] == 1
    err = capsys.readouterr().err
    assert "usage" in err.lower() or "error" in err.lower()


@pytest.mark.filterwarnings("ignore::splinekit.lsq.IllPosedWarning")
def test_numerical_failure_exit_code(tmp_path):
    data = tmp_path / "bad.csv"
    data.write_text("x,y,z\n0.3,0.3,0\n0.3,0.3,1\n")
    code, _ = run("interp", "--mesh", "square_grid:2", "--data", data)
    assert code == 2


@pytest.mark.parametrize("command", ["dim", "fit", "interp", "levelset", "contour", "sample", "poisson", "elliptic", "converge", "bench"])
def test_dry_run(command):
    code, out = run(command, "--dry-run", "--d", 4)
    assert code == 0
    cfg = kv(out)
    assert cfg["command"] == command and cfg["d"] == "4"
    code, out = run("lkb", "build", "--dry-run", "--n", 7)
    assert code == 0 and kv(out)["n"] == "7"


def test_fit_is_deterministic_and_seeded():
    a = run("fit", "--mesh", "square_grid:2", "--d", 3, "--seed", 7, "--noise", 0.05)
    b = run("fit", "--mesh", "square_grid:2", "--d", 3, "--seed", 7, "--noise", 0.05)
    c = run("fit", "--mesh", "square_grid:2", "--d", 3, "--seed", 8, "--noise", 0.05)
    assert a[0] == 0 and a[1] == b[1] and a[1] != c[1]


def test_fit_contour_sample_pipeline(tmp_path):
    coeffs = tmp_path / "c.csv"
    code, out = run("fit", "--mesh", "square_grid:4", "--target", "f6", "--samples", 800, "--lambda", 1e-6, "--out", coeffs)
    assert code == 0
    rep = kv(out)
    assert float(rep["smoothness_residual"]) <= 1e-8
    code, out = run("contour", "--mesh", "square_grid:4", "--coeffs", coeffs, "--level", 0.9, "--grid", 128)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "curve_id,x,y" and len(lines) > 10
    pts = np.array([[float(v) for v in ln.split(",")[1:]] for ln in lines[1:]])
    # f6 = exp(-|p - (0.5, 0.5)|^2) equals 0.9 on the circle of radius sqrt(-ln 0.9)
    r = np.hypot(pts[:, 0] - 0.5, pts[:, 1] - 0.5)
    assert np.abs(r - np.sqrt(-np.log(0.9))).max() < 0.01
    code, out = run("sample", "--mesh", "square_grid:4", "--coeffs", coeffs, "--grid", 11)
    assert code == 0
    Z = np.array([[float(v) for v in ln.split(",")] for ln in out.strip().splitlines()])
    assert Z.shape == (11, 11)
    assert abs(Z[5, 5] - 1.0) < 0.02


def test_levelset_reports_hausdorff():
    code, out = run("levelset", "--mesh", "square_grid:4", "--grid", 256, "--out", "/dev/null")
    assert code == 0
    assert float(kv(out)["hausdorff_to_circle"]) < 0.02


def test_converge_exact(tmp_path):
    code, out = run("converge", "--mesh", "square_grid:1", "--d", 3, "--r", 1, "--exact", "quadratic", "--grid", 21)
    assert code == 0
    assert "# L2_rate=EXACT" in out
    assert len([ln for ln in out.splitlines() if ln and not ln.startswith("#")]) == 4


def test_elliptic(tmp_path):
    code, out = run("elliptic", "--mesh", "square_grid:4", "--d", 8, "--exact", "exp", "--a11", 2, "--a12", 0.5, "--b1", 1, "--c0", -1)
    assert code == 0
    header, row = out.strip().splitlines()
    assert float(dict(zip(header.split(","), row.split(",")))["RMSE"]) < 1e-7


def test_lkb_build_and_fit(tmp_path):
    code, out = run("lkb", "build", "--n", 10, "--out", tmp_path / "basis", "--threads", 2)
    assert code == 0 and kv(out)["basis_size"] == "20"
    assert float(kv(out)["max_smoothness_residual"]) <= 1e-8
    code, out = run("lkb", "fit", "--basis", tmp_path / "basis", "--target", "one")
    assert code == 0 and float(kv(out)["rmse_test"]) < 1e-8
    assert run("lkb", "fit", "--basis", tmp_path / "missing")[0] == 1


def test_output_files_bitwise_identical(tmp_path):
    for k in (1, 2):
        assert run("interp", "--mesh", "square_grid:2", "--d", 4, "--samples", 30, "--out", tmp_path / f"i{k}.csv")[0] == 0
    assert (tmp_path / "i1.csv").read_bytes() == (tmp_path / "i2.csv").read_bytes()


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "splinekit", "dim", "--mesh", "two_triangle_square", "--d", "1", "--r", "1"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and "L=3" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "splinekit", "dim", "--nope"], capture_output=True, text=True)
    assert proc.returncode == 1
