import json

import numpy as np
import pytest

from modeluq import cli
from modeluq.errors import ConfigError, NonConvergence, ZeroRealizedForce
from modeluq.io import export_measurements
from modeluq.pipeline import (PLOT_HEADER, StageError, generate_data, load_config,
                              run_pipeline, write_outputs)


@pytest.fixture(scope="module")
def result():
    return run_pipeline({})


def test_verdict_pattern(result):
    summary = result.report["summary"]
    assert summary == {"M1": "reject", "M2": "reject", "M3": "accept"}
    m2 = {s["scenario"]: s for s in result.report["models"]["M2"]["scenarios"]}
    assert m2["loading-vs-unloading"]["rejected"]
    assert not all(m2[k]["rejected"] for k in ("loading-within", "unloading-within"))


def test_threshold_recorded(result):
    for rep in result.report["models"].values():
        assert rep["tol"] == 0.05
        assert rep["threshold"] == pytest.approx(0.0125)
        assert len(rep["scenarios"]) == 4


def test_design_and_provenance(result):
    rep = result.report
    assert rep["design"]["omega"] == "110"
    feasible = {d["omega"]: d["feasible"] for d in rep["design"]["evaluated"]}
    assert feasible["101"] is False
    prov = rep["provenance"]
    assert prov["seed"] == 0 and prov["config"]["tol"] == 0.05
    assert "state_residual" in prov["tolerances"] and "version" in prov
    assert [r["sensor"] for r in rep["normality"]] == ["R_y", "F_x"]


def test_reports_are_byte_identical(result):
    assert run_pipeline({}).text == result.text


def test_seed_changes_the_report(result):
    assert run_pipeline({"seed": 1}).text != result.text


def test_plot_rows_one_per_series_input_active_sensor(result, tmp_path):
    out = write_outputs(result, tmp_path)
    for mid, rows in result.plots.items():
        assert len(rows) == 6 * 29 * 2
        keys = {(r[0], r[1], r[2]) for r in rows}
        assert len(keys) == len(rows)
        lines = (out / f"curves_{mid}.csv").read_text().splitlines()
        assert lines[0] == ",".join(PLOT_HEADER) and len(lines) == 1 + len(rows)
    verdicts = json.loads((out / "verdicts.json").read_text())
    assert verdicts["summary"] == result.report["summary"]
    assert (out / "report.json").read_text() == result.text
    assert (out / "verdicts.csv").read_text().count("\n") == 1 + 12


def test_ingested_data_gives_same_report(result, tmp_path):
    path = tmp_path / "d.csv"
    export_measurements(generate_data(load_config({})), path)
    assert run_pipeline({"data": str(path)}).report["models"] == result.report["models"]


def test_skip_policy_and_subset_of_models():
    res = run_pipeline({"normality": {"policy": "skip"}, "models": ["M3"],
                        "schemes": ["loading-vs-unloading"]})
    assert res.report["normality"] is None
    assert list(res.report["summary"]) == ["M3"]
    rep = res.report["models"]["M3"]
    assert rep["normality_waived"] and rep["threshold"] == 0.05


@pytest.mark.parametrize("cfg", [
    {"tol": 0.0}, {"tol": 1.5}, {"schemes": []}, {"models": ["M9"]}, {"bogus": 1},
    {"oed": {"criterion": "Z"}}, {"schemes": ["sideways"]}, {"seed": "x"},
])
def test_invalid_configs(cfg):
    with pytest.raises(ConfigError):
        load_config(cfg)


def test_stage_errors_are_labelled(tmp_path):
    with pytest.raises(StageError) as err:
        run_pipeline({"data": str(tmp_path / "absent.csv")})
    assert err.value.stage == "data"


def test_cli_exit_codes_map_error_kinds():
    assert cli.exit_code(ConfigError("x")) == 2
    assert cli.exit_code(StageError("correct", ZeroRealizedForce("x"))) == 3
    assert cli.exit_code(StageError("oed", NonConvergence("x"))) == 4


@pytest.fixture(scope="module")
def data_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "d.csv"
    assert cli.main(["generate", "--out", str(path)]) == 0
    return path


def test_cli_pipeline_writes_outputs(data_file, tmp_path, result):
    assert cli.main(["pipeline", "--data", str(data_file), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "report.json").read_text() != ""
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["summary"] == result.report["summary"]


@pytest.mark.parametrize("command", ["oed", "screen", "detect"])
def test_cli_stage_commands(data_file, tmp_path, command):
    out = tmp_path / f"{command}.json"
    assert cli.main([command, "--data", str(data_file), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert "provenance" in doc


def test_cli_overrides(data_file, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"tol": 0.1}))
    out = tmp_path / "r.json"
    args = ["detect", "--config", str(cfg), "--data", str(data_file), "--out", str(out),
            "--omega", "110"]
    assert cli.main(args) == 0
    assert json.loads(out.read_text())["models"]["M1"]["threshold"] == pytest.approx(0.025)
    assert cli.main(args + ["--tol", "0.2"]) == 0
    assert json.loads(out.read_text())["models"]["M1"]["threshold"] == pytest.approx(0.05)
    assert cli.main(["oed", "--data", str(data_file), "--criterion", "A", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["provenance"]["config"]["oed"]["criterion"] == "A"


def test_cli_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["pipeline", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"tol": 3}))
    assert cli.main(["pipeline", "--config", str(bad)]) == 2
    assert cli.main(["screen", "--omega", "12"]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_data_errors_exit_3(data_file, tmp_path):
    lines = data_file.read_text().splitlines()
    broken = tmp_path / "broken.csv"
    broken.write_text("\n".join(lines[:5] + lines[6:]) + "\n")
    assert cli.main(["pipeline", "--data", str(broken)]) == 3
    f = lines[3].split(",")
    f[2] = "0.0"
    broken.write_text("\n".join(lines[:3] + [",".join(f)] + lines[4:]) + "\n")
    assert cli.main(["detect", "--data", str(broken)]) == 3
    assert cli.main(["pipeline", "--data", str(tmp_path / "absent.csv")]) == 3


def test_cli_numerical_failure_exits_4(data_file):
    # one sensor on a linear structure sees both stiffnesses only through one ratio
    assert cli.main(["detect", "--data", str(data_file), "--omega", "100"]) == 4


def test_cli_generate_to_stdout(capsys):
    assert cli.main(["generate", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("series,input_index,q_realized,q_setpoint,s1,s2,s3\n")
    assert len(out.splitlines()) == 1 + 6 * 29
    assert np.isfinite(float(out.splitlines()[-1].split(",")[-1]))
