import json

import pytest

from fcap.analysis import TheoremReport
from fcap.cli import ConfigError, RunConfig, emit_report, main


def run_cli(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out)])
    return code, out


def test_capacity_manifest(tmp_path):
    code, out = run_cli(tmp_path, "capacity", "--body", "wulff:1", "--grid", "24", "--rout", "4,6")
    assert code == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["q"] == -1.0
    assert m["results"]["solve"]["capacity"] == pytest.approx(6.283185307, rel=0.05)
    assert m["checks"][0]["verdict"] == "consistent"
    assert "wall_seconds" in json.loads((out / "timings.json").read_text())


def test_rerun_is_byte_identical(tmp_path):
    args = ("levels", "--body", "wulff:1", "--grid", "20", "--seed", "3", "--threads", "1")
    names = ("manifest.json", "report_homothetic_levels.json")
    code_a, out = run_cli(tmp_path, *args)
    first = [(out / n).read_bytes() for n in names]
    code_b, _ = run_cli(tmp_path, *args)
    assert code_a == code_b
    assert [(out / n).read_bytes() for n in names] == first


def test_field_export(tmp_path):
    code, out = run_cli(tmp_path, "annulus", "--body", "wulff:0.5", "--R", "2", "--grid", "16", "--field")
    assert code == 0
    assert (out / "field.csv").read_text().splitlines()[0] == "x,y,z,u"
    assert json.loads((out / "field.json").read_text())["R_out"] == 2.0


@pytest.mark.parametrize("args", [
    ("capacity", "--norm", "lq:abc"),
    ("capacity", "--body", "sphere:1"),
    ("capacity", "--p", "3.5"),
    ("capacity", "--grid", "8"),
    ("capacity", "--rout", "6,4"),
    ("capacity", "--rout", "4,x"),
    ("bm", "--body", "wulff:1"),
    ("overdetermined", "--body", "wulff:0.5"),
    ("teleport",),
])
def test_bad_input_exits_1(tmp_path, args, capsys):
    code, _ = run_cli(tmp_path, *args)
    assert code == 1
    assert capsys.readouterr().err


def test_error_names_the_token(tmp_path, capsys):
    run_cli(tmp_path, "capacity", "--norm", "lq:abc")
    assert "lq:abc" in capsys.readouterr().err


def test_violation_exits_2(tmp_path):
    # a non-Wulff body whose boundary gradient looks constant at this tolerance
    code, out = run_cli(tmp_path, "overdetermined", "--body", "box:0.2,0.2,0.2", "--R", "2", "--grid", "24")
    rep = json.loads((out / "report_overdetermined.json").read_text())
    assert rep["verdict"] == "violated"
    assert code == 2


def test_empty_manifest(tmp_path):
    path = tmp_path / "m.json"
    m = emit_report([], str(path))
    assert m["checks"] == [] and json.loads(path.read_text())["checks"] == []


def test_emit_report_rounds_and_sorts(tmp_path):
    rep = TheoremReport("x", "consistent", measured={"b": 1 / 3, "a": float("nan")})
    path = tmp_path / "m.json"
    emit_report([rep], str(path), config=RunConfig("capacity"), q=-1.0)
    text = path.read_text()
    assert "0.333333333333\n" in text and '"NaN"' not in text and '"nan"' in text
    d = json.loads(text)
    assert list(d) == sorted(d)
    assert d["config"]["command"] == "capacity"


def test_validate():
    with pytest.raises(ConfigError):
        RunConfig("capacity", p=1.0).validate()
    with pytest.raises(ConfigError):
        RunConfig("capacity", dim=2).validate()
    RunConfig("capacity").validate()
