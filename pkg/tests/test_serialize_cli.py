import json
import os

import numpy as np
import pytest

from desing import cli, plot, serialize
from desing import quotient as Q
from desing.errors import UnknownReportKind


def run(argv, capsys):
    code = cli.run_command(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_floats_round_trip():
    vals = [0.1, 1 / 3, 1e-300, 12345.678901234567, -2.0]
    text = serialize.dumps({"v": vals, "inf": float("inf")})
    back = json.loads(text)
    assert back["v"] == vals and back["inf"] == "inf"
    assert text == serialize.dumps({"v": vals, "inf": float("inf")})


def test_csv_round_trip(tmp_path):
    d = np.array([[0.0, 1 / 3], [1 / 3, 0.0]])
    sp = Q.FiniteMetricSpace(("a", "b"), d)
    p = tmp_path / "x.csv"
    serialize.write_space_csv(p, sp)
    back = serialize.read_space_csv(p)
    assert back.labels == ("a", "b") and np.array_equal(back.distances, d)


def test_bad_csv(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("label,a\na,0,1\n")
    with pytest.raises(ValueError):
        serialize.read_space_csv(p)


def test_plot_kinds():
    assert plot.detect_kind([]) == "empty"
    assert plot.detect_kind({"kind": "compare", "rows": []}) == "compare"
    assert plot.detect_kind([{"codim": 2, "witnesses": []}]) == "stratification"
    with pytest.raises(UnknownReportKind):
        plot.detect_kind({"kind": "mystery"})
    assert plot.render([]).startswith("<svg")


def test_validate_ok(capsys):
    code, out, _ = run(["validate", "--action", "so3_r3"], capsys)
    assert code == 0 and "algebra_dim=3" in out


def test_validation_error_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"ambient_dim": 2, "group": {"lie_algebra": [[[0, 1], [1, 0]]]}}))
    code, _, err = run(["validate", "--action", str(p)], capsys)
    assert code == 1
    payload = json.loads(err)["error"]
    assert payload["code"] == "ValidationError"
    assert payload["context"]["violations"][0]["code"] == "NonSkew"


def test_malformed_json_and_missing_args(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert run(["validate", "--action", str(p)], capsys)[0] == 1
    assert run(["stratify"], capsys)[0] == 1
    assert run([], capsys)[0] == 1


def test_stage_limit_exit_code(capsys):
    code, _, err = run(["desingularize", "--action", "s1_r3", "--max-stages", "0",
                        "--samples", "100"], capsys)
    assert code == 3
    assert json.loads(err)["error"]["code"] == "StageLimitExceeded"


def test_stratify_writes_list(tmp_path, capsys):
    out = tmp_path / "st.json"
    code, line, _ = run(["stratify", "--action", "s1_r3", "--grid", "11", "--out", str(out)], capsys)
    assert code == 0 and "codims=[2, 3]" in line
    data = json.loads(out.read_text())
    assert isinstance(data, list) and {d["codim"] for d in data} == {2, 3}
    svg = tmp_path / "st.svg"
    assert run(["plot", "--input", str(out), "--out", str(svg)], capsys)[0] == 0
    assert svg.read_text().startswith("<svg")


def test_quotient_and_gh(tmp_path, capsys):
    x = tmp_path / "X.csv"
    assert run(["quotient", "--action", "z2_r1", "--samples", "20", "--out", str(x)], capsys)[0] == 0
    out = tmp_path / "gh.json"
    code, line, _ = run(["gh", "--a", str(x), "--b", str(x), "--out", str(out)], capsys)
    assert code == 0
    assert json.loads(out.read_text())["interval"] == [0.0, 0.0]


def test_metric_check_isometry(tmp_path, capsys):
    out = tmp_path / "m.json"
    code, _, _ = run(["metric-check", "--action", "s1_r2", "--kind", "isometry",
                      "--samples", "200", "--out", str(out)], capsys)
    rep = json.loads(out.read_text())
    assert code == 0 and rep["passed"] and rep["bit_equal"]


def test_metric_check_stage_out_of_range(capsys):
    code, _, err = run(["metric-check", "--action", "s1_r2", "--kind", "isometry", "--stage", "2"],
                       capsys)
    assert code == 1 and json.loads(err)["error"]["code"] == "UnsupportedStage"


def test_thread_env_does_not_change_output(tmp_path, capsys, monkeypatch):
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("DESING_THREADS", threads)
        p = tmp_path / f"X{threads}.csv"
        run(["quotient", "--action", "s1_r2", "--samples", "40", "--out", str(p)], capsys)
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
