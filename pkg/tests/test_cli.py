import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dsbem.bvp import solve
from dsbem.cli import dumps, export_vtk, main, read_vtk, sample_grid
from dsbem.mesh import make_icosphere, write_off
from dsbem.spaces import DensityP1


@pytest.fixture(scope="module")
def cache(tmp_path_factory):
    return str(tmp_path_factory.mktemp("ops-cache"))


def _write(tmp_path, name, config):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return str(path)


def _run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _shell_config(level=2, **extra):
    return {"mesh": {"icosphere": {"level": level}}, "problem": "dirichlet", "data": {"preset": "shell"}, **extra}


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ----------------------------------------------------------------------------
# solve


def test_dirichlet_shell_solve(tmp_path, capsys, cache):
    cfg = _write(tmp_path, "shell.json", _shell_config(probes=[[0, 0, 0.5], [0, 0, 2.0]]))
    code, out, err = _run(["solve", cfg, "-o", str(tmp_path / "out"), "--cache-dir", cache], capsys)
    assert code == 0, err
    assert json.loads(out)["status"] == "ok"
    traces = json.loads((tmp_path / "out" / "traces.json").read_text())
    g_e = np.array(traces["neumann"]["exterior"]["p0"])
    g_i = np.array(traces["neumann"]["interior"]["p0"])
    # documented tolerance: 10% relative l2 against the exact fluxes (0, -1)
    assert np.linalg.norm(g_e + 1) <= 0.10 * np.sqrt(len(g_e))
    assert np.linalg.norm(g_i) <= 0.10 * np.sqrt(len(g_i))
    sol = json.loads((tmp_path / "out" / "solution.json").read_text())
    assert np.abs(np.array(sol["sigma"]["p0"]) - 1).max() <= 0.05
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    probes = report["probes"]
    assert [p["side"] for p in probes] == ["interior", "exterior"]
    for p in probes:
        assert_allclose(p["value"], p["reference"], rtol=0.02)


def test_incompatible_neumann_exit_code(tmp_path, capsys):
    nt = make_icosphere(0).n_triangles
    cfg = _write(tmp_path, "neu.json", {"mesh": {"icosphere": {"level": 0}}, "problem": "neumann",
                                         "data": {"g_i": {"p0": [1.0] * nt}, "g_e": {"p0": [0.0] * nt}}})
    code, out, err = _run(["solve", cfg, "-o", str(tmp_path)], capsys)
    assert code == 2
    assert json.loads(err)["error"]["code"] == "incompatible_neumann_data"


def test_mismatched_density_kind_is_schema_error(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.json", {"mesh": {"icosphere": {"level": 0}}, "problem": "dirichlet",
                                         "data": {"f_i": {"p0": [1.0] * 20}, "f_e": {"p1": [1.0] * 12}}})
    code, out, err = _run(["solve", cfg, "-o", str(tmp_path)], capsys)
    assert code == 1
    e = json.loads(err)["error"]
    assert e["code"] == "schema_error"
    assert "p1" in e["message"]


@pytest.mark.parametrize("config, needle", [
    ({"mesh": {"icosphere": {"level": 0}}, "problem": "robin", "data": {"preset": "shell"}}, "problem"),
    ({"mesh": {"icosphere": {"level": 0}}, "problem": "dirichlet", "data": {"preset": "bogus"}}, "preset"),
    ({"mesh": {"icosphere": {"level": 0}}, "problem": "dirichlet",
      "data": {"preset": "shell", "f_i": {"p1": [1.0] * 12}}}, "either"),
    ({"mesh": {"icosphere": {"level": 0}}, "problem": "dirichlet", "data": {"f_i": {"p1": [1.0] * 5},
                                                                           "f_e": {"p1": [1.0] * 12}}}, "f_i"),
])
def test_schema_errors(tmp_path, capsys, config, needle):
    code, out, err = _run(["solve", _write(tmp_path, "c.json", config), "-o", str(tmp_path)], capsys)
    assert code == 1
    e = json.loads(err)["error"]
    assert e["code"] == "schema_error"
    assert needle in e["message"]


def test_invalid_json_and_missing_file(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert _run(["solve", str(p)], capsys)[0] == 1
    assert _run(["solve", str(tmp_path / "absent.json")], capsys)[0] == 1


def test_usage_errors(tmp_path, capsys):
    assert _run([], capsys)[0] == 1
    assert _run(["frobnicate"], capsys)[0] == 1
    cfg = _write(tmp_path, "shell.json", _shell_config(level=0))
    code, _, err = _run(["solve", cfg, "--quad-order", "0"], capsys)
    assert code == 1
    assert json.loads(err)["error"]["code"] == "usage_error"


def test_outputs_are_bit_identical(tmp_path, capsys, cache):
    cfg = _write(tmp_path, "shell.json", _shell_config(level=1, probes=[[0, 0, 0.5]]))
    for name in ("a", "b"):
        assert _run(["solve", cfg, "-o", str(tmp_path / name), "--cache-dir", cache], capsys)[0] == 0
    for f in ("solution.json", "traces.json", "report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_dumps_uses_17_digits():
    text = dumps({"b": 0.1, "a": np.float64(1 / 3), "n": np.int64(2), "l": [True, None]})
    assert json.loads(text) == {"a": 1 / 3, "b": 0.1, "l": [True, None], "n": 2}
    assert "0.33333333333333331" in text
    assert text.index('"a"') < text.index('"b"')
    with pytest.raises(ValueError):
        dumps({"x": float("nan")})


def test_module_entry_point(tmp_path):
    nt = make_icosphere(0).n_triangles
    cfg = _write(tmp_path, "neu.json", {"mesh": {"icosphere": {"level": 0}}, "problem": "neumann",
                                         "data": {"g_i": {"p0": [1.0] * nt}, "g_e": {"p0": [0.0] * nt}}})
    proc = subprocess.run([sys.executable, "-m", "dsbem", "solve", cfg, "-o", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "incompatible_neumann_data" in proc.stderr


# ----------------------------------------------------------------------------
# boundary maps


def test_dtn_and_ntd_commands(tmp_path, capsys, cache):
    cfg = _write(tmp_path, "shell.json", _shell_config(level=2))
    code, _, err = _run(["dtn", cfg, "-o", str(tmp_path), "--cache-dir", cache], capsys)
    assert code == 0, err
    res = json.loads((tmp_path / "dtn.json").read_text())
    assert res["direction"] == "DtN"
    g_e = np.array(res["output"]["exterior"]["p0"])
    assert np.linalg.norm(g_e + 1) <= 0.10 * np.sqrt(len(g_e))

    neu = _write(tmp_path, "neu.json", {"mesh": {"icosphere": {"level": 2}}, "problem": "neumann",
                                         "data": {"preset": "shell"}})
    code, _, err = _run(["ntd", neu, "-o", str(tmp_path), "--cache-dir", cache], capsys)
    assert code == 0, err
    res = json.loads((tmp_path / "ntd.json").read_text())
    f_e = np.array(res["output"]["exterior"]["p1"])
    f_i = np.array(res["output"]["interior"]["p1"]) - res["gauge_constant"]
    assert np.abs(f_e - 1).max() <= 0.05
    assert np.abs(f_i - 1).max() <= 0.05


def test_map_rejects_wrong_problem_kind(tmp_path, capsys):
    cfg = _write(tmp_path, "shell.json", _shell_config(level=0))
    code, _, err = _run(["ntd", cfg, "-o", str(tmp_path)], capsys)
    assert code == 1
    assert json.loads(err)["error"]["code"] == "schema_error"


# ----------------------------------------------------------------------------
# VTK export


def test_vtk_zero_grid_roundtrip(tmp_path):
    grid = {"origin": [0, 0, 0], "spacing": [1, 1, 1], "dims": [2, 2, 2]}
    path = tmp_path / "z.vtk"
    export_vtk(np.zeros(8), np.zeros(8, dtype=int), grid, path)
    parsed = read_vtk(path)
    assert parsed["n_points"] == 8
    assert parsed["dims"] == [2, 2, 2]
    assert not parsed["fields"]["w"].any()
    assert path.read_text().startswith("# vtk DataFile Version")
    with pytest.raises(ValueError):
        export_vtk(np.zeros(7), np.zeros(7, dtype=int), grid, path)


def test_vtk_unwritable_path(tmp_path, capsys):
    grid = {"origin": [0, 0, 0], "spacing": [1, 1, 1], "dims": [1, 1, 1]}
    from dsbem.cli import CliError

    with pytest.raises(CliError) as exc:
        export_vtk(np.zeros(1), np.zeros(1, dtype=int), grid, tmp_path / "missing" / "x.vtk")
    assert exc.value.exit_code == 2


def test_shell_field_along_z_axis(tmp_path, capsys, cache):
    grid = {"origin": [0, 0, 0.05], "spacing": [1, 1, 0.2], "dims": [1, 1, 15]}
    cfg = _write(tmp_path, "shell.json", _shell_config(level=3, grid=grid))
    code, _, err = _run(["solve", cfg, "-o", str(tmp_path), "--cache-dir", cache], capsys)
    assert code == 0, err
    vtk = read_vtk(tmp_path / "field.vtk")
    z = 0.05 + 0.2 * np.arange(15)
    w, side = vtk["fields"]["w"], vtk["fields"]["side"]
    assert np.array_equal(side, np.where(z < 1, 1, 2))
    assert_allclose(w, np.where(z < 1, 1.0, 1 / z), rtol=0.02)


def test_grid_points_on_surface_are_masked(ops1):
    mesh = ops1.mesh
    one = DensityP1(np.ones(mesh.n_vertices))
    sol = solve(ops1, "dirichlet", one, one)
    v = mesh.vertices[0]
    grid = {"origin": list(v), "spacing": list(-v), "dims": [2, 1, 1]}
    values, side = sample_grid(sol, grid)
    assert side[0] == 0 and values[0] == 0.0
    assert side[1] == 1
    assert_allclose(values[1], 1.0, rtol=0.05)


# ----------------------------------------------------------------------------
# convergence and mesh-info


def test_convergence_single_level(tmp_path, capsys, cache):
    cfg = _write(tmp_path, "conv.json", {"mesh": {"icosphere": {"level": 1}}, "problem": "dirichlet",
                                          "data": {"preset": "point_source"}})
    out = tmp_path / "c.csv"
    code, _, err = _run(["convergence", cfg, "--levels", "1", "1", "--csv", str(out), "--cache-dir", cache], capsys)
    assert code == 0, err
    rows = _read_csv(out)
    assert len(rows) == 1
    assert list(rows[0]) == ["level", "h", "dof", "err_sigma", "err_q", "err_field", "observed_order"]
    assert rows[0]["observed_order"] == ""
    assert int(rows[0]["dof"]) == 80 + 42


def test_convergence_neumann_harmonic(tmp_path, capsys, cache):
    cfg = _write(tmp_path, "conv.json", {"mesh": {"icosphere": {"level": 1}}, "problem": "neumann",
                                          "data": {"preset": "harmonic", "n": 1}})
    out = tmp_path / "n.csv"
    code, _, err = _run(["convergence", cfg, "--levels", "1", "3", "--csv", str(out), "--cache-dir", cache], capsys)
    assert code == 0, err
    err_q = [float(r["err_q"]) for r in _read_csv(out)]
    assert all(a / b >= 1.5 for a, b in zip(err_q, err_q[1:]))


def test_convergence_needs_preset(tmp_path, capsys):
    cfg = _write(tmp_path, "conv.json", {"mesh": {"icosphere": {"level": 0}}, "problem": "dirichlet",
                                          "data": {"f_i": {"p1": [1.0] * 12}, "f_e": {"p1": [1.0] * 12}}})
    assert _run(["convergence", cfg, "--levels", "0", "0", "-o", str(tmp_path)], capsys)[0] == 1


def test_mesh_info(tmp_path, capsys):
    code, out, _ = _run(["mesh-info", "--icosphere", "2"], capsys)
    assert code == 0
    info = json.loads(out)
    assert info["valid"]
    assert info["stats"]["n_triangles"] == 320 and info["stats"]["n_vertices"] == 162

    path = tmp_path / "flipped.off"
    write_off(make_icosphere(1).flipped(), path)
    code, out, _ = _run(["mesh-info", str(path)], capsys)
    assert code == 2
    info = json.loads(out)
    assert not info["valid"] and info["violations"]

    assert _run(["mesh-info", str(tmp_path / "none.off")], capsys)[0] == 1
    assert _run(["mesh-info"], capsys)[0] == 1
