import json
import math
import subprocess
import sys

import numpy as np
import pytest

from srminimal.cli import execute
from srminimal.config import load_config, packaged_configs, parse_config
from srminimal.errors import ConfigError
from srminimal.mesh import fmt


def run(argv, capsys):
    code = execute(argv)
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_structure_report(capsys):
    code, out, _ = run(["structure", "--preset", "heisenberg"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert np.allclose(rep["one_form"], [0, 0, 1], atol=0)
    assert rep["reeb"] == [0.0, 0.0, 1.0]
    assert rep["structural_constants"]["c_12^3"] == pytest.approx(1.0)
    assert rep["contact_margin"] > 0


def test_structure_higher_heisenberg(capsys):
    code, out, _ = run(["structure", "--preset", "heisenberg", "--m", "2"], capsys)
    rep = json.loads(out)
    assert code == 0 and len(rep["chart"]) == 5
    assert rep["one_form"][-1] == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert "contact_margin" in rep


def test_structure_rototranslation(capsys):
    rep = json.loads(run(["structure", "--preset", "rototranslation"], capsys)[1])
    c = rep["structural_constants"]
    assert c["c_12^3"] == pytest.approx(1) and c["c_23^1"] == pytest.approx(1)
    assert np.allclose(rep["one_form"], [0, 1, 0], atol=1e-15)


def test_residual_and_charpoints(capsys):
    code, out, _ = run(["residual", "--config", "e2_residual_c"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["evaluated"] > 0 and rep["max_abs_residual"] <= 1e-10
    code, out, _ = run(["charpoints", "--config", "h1_plane_charpoints"], capsys)
    pts = json.loads(out)["points"]
    assert code == 0 and len(pts) == 1 and pts[0]["index"] == 1
    code, out, _ = run(["charpoints", "--config", "e2_singular_charpoints"], capsys)
    pts = json.loads(out)["points"]
    assert pts and all(p["kind"] != "isolated" for p in pts)


def test_geodesic_and_classify(tmp_path, capsys):
    code, _, _ = run(["geodesic", "--config", "e2_vertical_geodesic", "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = (tmp_path / "geodesic.csv").read_text().splitlines()
    assert rows[0] == "t,x,y,z,psi,u3"
    last = [float(v) for v in rows[-1].split(",")]
    assert np.allclose(last[:4], [3, 0, 0, 3], atol=1e-12)
    assert json.loads((tmp_path / "geodesic.json").read_text())["length"] == pytest.approx(3.0)
    code, out, _ = run(["classify", "--preset", "heisenberg"], capsys)
    assert json.loads(out)["case"] == "d"


def test_sweep_outputs(tmp_path, capsys):
    code, _, _ = run(["sweep", "--config", "fig1a", "--out", str(tmp_path)], capsys)
    assert code == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["config.effective.json", "fig1a.csv", "fig1a.json", "fig1a.obj"]
    obj = (tmp_path / "fig1a.obj").read_text().splitlines()
    assert obj[0].startswith("#")
    verts = [l for l in obj if l.startswith("v ")]
    faces = [l for l in obj if l.startswith("f ")]
    assert len(verts) == 64 * 201 and len(faces) == 63 * 200
    assert max(int(v) for f in faces for v in f.split()[1:]) == len(verts)
    csv = (tmp_path / "fig1a.csv").read_text().splitlines()
    assert csv[0] == "s,t,x,y,z,phi" and len(csv) == 1 + 64 * 201


def test_deterministic_and_round_trip(tmp_path, capsys):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for d in (a, b):
        assert run(["sweep", "--config", "fig2b", "--out", str(d)], capsys)[0] == 0
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()
    eff = json.loads((a / "config.effective.json").read_text())
    assert eff["sweep"]["n_s"] == 64 and eff["sweep"]["h"] == 1e-3
    assert run(["sweep", "--config", str(a / "config.effective.json"), "--out", str(c)], capsys)[0] == 0
    for f in a.iterdir():
        assert f.read_bytes() == (c / f.name).read_bytes()


def test_float_format_round_trips(rng):
    for v in np.concatenate([rng.normal(size=50) * 10.0 ** rng.integers(-20, 20, 50), [0.1, 1 / 3, -0.0]]):
        assert float(fmt(v)) == v
    assert fmt(0.1) == "0.1"


def test_seed_flag_changes_nothing_deterministic(capsys):
    assert run(["classify", "--preset", "rototranslation", "--seed", "3"], capsys)[1] == \
        run(["classify", "--preset", "rototranslation", "--seed", "3"], capsys)[1]


@pytest.mark.parametrize("command,doc,pointer", [
    ("sweep", {"structure": {"chart": ["x", "y", "z"]}}, "/structure"),
    ("sweep", {"structure": {"preset": "sphere"}}, "/structure/preset"),
    ("residual", {"structure": {"preset": "heisenberg"}, "surface": {"F": "z +* x"},
                  "residual": {"box": [[-1, 1], [-1, 1], [-1, 1]]}}, "/surface/F"),
    ("sweep", {"structure": {"preset": "heisenberg"}, "sweep": {"gamma": ["s", "0", "0"], "phi0": "s",
               "s_range": [0, 1], "t_range": [1, 2]}}, "/sweep/t_range"),
    ("sweep", {"structure": {"preset": "heisenberg"}, "bogus": 1}, "/"),
])
def test_config_errors(tmp_path, capsys, command, doc, pointer):
    code, out, err = run([command, "--config", write(tmp_path, doc)], capsys)
    assert code == 2 and out == ""
    e = json.loads(err)
    assert e["error"] == "config" and e["pointer"] == pointer


def test_missing_and_malformed_files(tmp_path, capsys):
    code, _, err = run(["structure", "--config", str(tmp_path / "nope.json")], capsys)
    assert code == 2 and json.loads(err)["error"] == "config"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run(["structure", "--config", str(bad)], capsys)
    assert code == 2 and "invalid JSON" in json.loads(err)["message"]


def test_missing_block(capsys):
    code, _, err = run(["sweep", "--preset", "heisenberg"], capsys)
    assert code == 2 and json.loads(err)["pointer"] == "/sweep"


def test_numeric_failure(tmp_path, capsys):
    flat = {"structure": {"chart": ["x", "y", "z"], "frame": [["1", "0", "0"], ["0", "1", "0"]]}}
    code, out, err = run(["structure", "--config", write(tmp_path, flat)], capsys)
    e = json.loads(err)
    assert code == 3 and e["error"] == "numeric" and e["type"] == "NotBracketGeneratingError"


def test_constant_expressions():
    cfg = parse_config({"geodesic": {"q0": [0, "pi", 0], "psi": "pi/4", "t_range": [0, "2*pi"]}})
    assert cfg.geodesic.q0[1] == math.pi and cfg.geodesic.t_range == (0.0, 2 * math.pi)
    with pytest.raises(ConfigError):
        parse_config({"geodesic": {"q0": [0, 0, 0], "psi": "1/0", "t_range": [0, 1]}})


def test_packaged_configs_load():
    names = packaged_configs()
    for fig in ("fig1a", "fig1b", "fig1c", "fig1d", "fig1e", "fig2a", "fig2b", "fig2c", "fig2d", "fig2e"):
        assert fig in names
    for n in names:
        assert load_config(n).structure is not None


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "srminimal.cli", "classify", "--preset", "heisenberg"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0 and json.loads(r.stdout)["all_angles"] is True
