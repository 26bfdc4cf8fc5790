import json

import pytest

from gritkit.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_rrwp_writes_slices_and_manifest(tmp_path, capsys):
    code, _, err = run(capsys, "rrwp", "--named", "path3", "--K", "3", "--out", str(tmp_path))
    assert code == 0 and err == ""
    assert (tmp_path / "slice0.csv").read_text() == "c0,c1,c2\n1,0,0\n0,1,0\n0,0,1\n"
    assert (tmp_path / "slice2.csv").read_text().splitlines()[1] == "0.5,0,0.5"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "rrwp" and manifest["config"]["K"] == 3
    assert manifest["outputs"] == ["slice0.csv", "slice1.csv", "slice2.csv", "rwse.csv"]
    assert not list(tmp_path.glob(".*.tmp"))


def test_rrwp_exact_mode(tmp_path, capsys):
    code, _, _ = run(capsys, "rrwp", "--named", "path3", "--K", "3", "--mode", "exact_rational",
                     "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "slice1.csv").read_text().splitlines()[2] == "1/2,0,1/2"


@pytest.mark.parametrize("argv", [
    ["rrwp", "--named", "path3", "--K", "0"],
    ["rrwp", "--named", "path3"],
    ["rrwp", "--K", "2"],
    ["rrwp", "--graph", "/no/such/file", "--K", "2"],
    ["synth", "--graphs", "0"],
    ["synth", "--kinds", "gat"],
    ["gradcheck", "everything"],
    ["gdwl", "--g1", "c6", "--g2", "c6", "--dist", "rrwp"],
    ["propcheck", "b", "--named", "path3", "--preset", "custom"],
    ["presets", "QM9"],
    [],
])
def test_usage_errors_exit_2(argv, capsys):
    code, out, err = run(capsys, *argv)
    assert code == 2 and out == "" and err


def test_graph_file_parse_error_reports_line(tmp_path, capsys):
    f = tmp_path / "g.txt"
    f.write_text("0 1\n1 1\n")
    code, _, err = run(capsys, "rrwp", "--graph", str(f), "--K", "2")
    assert code == 2 and "line 2" in err


def test_gdwl_verdicts(capsys):
    for dist, want in (("spd", False), ("rrwp-full", True)):
        code, out, _ = run(capsys, "gdwl", "--g1", "dodecahedron", "--g2", "desargues", "--dist", dist)
        assert code == 0 and json.loads(out)["distinguishable"] is want
    code, out, _ = run(capsys, "gdwl", "--g1", "c6", "--g2", "c6", "--dist", "spd")
    assert json.loads(out)["distinguishable"] is False


def test_gdwl_accepts_edge_list_file(tmp_path, capsys):
    f = tmp_path / "tri.txt"
    f.write_text("0 1\n1 2\n2 0\n")
    code, out, _ = run(capsys, "gdwl", "--g1", str(f), "--g2", "cycle3")
    assert code == 0 and json.loads(out)["distinguishable"] is False


def test_propcheck_commands(capsys, tmp_path):
    code, out, _ = run(capsys, "propcheck", "a", "--named", "dodecahedron", "--K", "20")
    r = json.loads(out)
    assert code == 0 and r["pass"] and r["max_abs_error"] == 0
    code, out, _ = run(capsys, "propcheck", "b", "--preset", "mean-agg", "--named", "path3")
    assert code == 0 and json.loads(out)["pass"]
    code, out, _ = run(capsys, "propcheck", "b", "--preset", "heat", "--named", "c6", "--tau", "0.5")
    assert code == 0
    code, out, _ = run(capsys, "propcheck", "c", "--named", "desargues", "--out", str(tmp_path))
    assert code == 0 and (tmp_path / "propcheck_c.json").exists()
    code, out, _ = run(capsys, "propcheck", "layernorm", "--fixture", "default")
    r = json.loads(out)
    assert code == 0 and r["bn_counterexample"]


def test_propcheck_failure_exits_1(tmp_path, capsys):
    fx = tmp_path / "fx.json"
    fx.write_text(json.dumps({"x_mean": [[1, 2], [3, 4]], "degrees": [1, 10]}))
    code, out, _ = run(capsys, "propcheck", "layernorm", "--fixture", str(fx))
    assert code == 1 and json.loads(out)["pass"] is False


def test_gradcheck_ops(capsys, tmp_path):
    code, out, _ = run(capsys, "gradcheck", "ops", "--out", str(tmp_path))
    assert code == 0 and json.loads(out)["pass"]


def test_synth_small_run_is_byte_identical(tmp_path, capsys):
    argv = ["synth", "--kinds", "grit,meanpool", "--k", "1", "--graphs", "2",
            "--epochs", "5", "--K-rrwp", "4", "--hidden", "4", "--workers", "1"]
    for name in ("a", "b"):
        assert run(capsys, *argv, "--out", str(tmp_path / name))[0] == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert "alpha/grit_rrwp_k1_g1.csv" in {str(f) for f in files}
    for rel in files:
        a, b = (tmp_path / "a" / rel).read_bytes(), (tmp_path / "b" / rel).read_bytes()
        if rel.name == "manifest.json":
            a, b = (json.loads(x) for x in (a, b))
            a.pop("timing"), b.pop("timing")
        assert a == b, rel


def test_presets_listing(capsys):
    code, out, _ = run(capsys, "presets")
    assert code == 0 and json.loads(out)["ZINC"]["rw_steps"] == 21
