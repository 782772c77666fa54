import json
import logging

import pandas as pd
import pytest
from pydantic import ValidationError

from app.models.experiment import ExperimentConfig, nest_flat_config
from app.models.reports import SuiteResult, Verdict
from app.services.storage.artifact_io import load_field
from app.utils.report_printer import RunReportPrinter
from main import EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE, build_config, main, parse_overrides

SMALL = ["--no-console", "--log-level=INFO", "--grid.N=32", "--transform.m=1"]


@pytest.fixture(autouse=True)
def run_logging_levels():
    # main() reconfigures the root logger; give it back afterwards
    root, app = logging.getLogger(), logging.getLogger("app")
    levels, handlers = (root.level, app.level), list(root.handlers)
    app.setLevel(logging.NOTSET)
    yield
    root.setLevel(levels[0])
    app.setLevel(levels[1])
    for handler in handlers:
        if handler not in root.handlers:
            root.addHandler(handler)


def test_parse_overrides():
    assert parse_overrides(["--grid.N=64", "--transform.m", "2", "--quick"]) == {
        "grid.N": "64",
        "transform.m": "2",
        "quick": "true",
    }
    with pytest.raises(ValueError):
        parse_overrides(["grid.N=64"])


def test_nest_flat_config():
    nested = nest_flat_config(
        {"grid.N": "32", "invert.grid.N": "48", "forward.grid.N": "16", "seed": "3", "empty": None}, "invert"
    )
    assert nested == {"grid": {"N": "48"}, "seed": "3"}
    with pytest.raises(ValueError):
        nest_flat_config({"grid.deep.N": "32"}, "phantom")


def test_config_precedence(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("grid.N=32\nphantom.grid.L=4.0\ntransform.m=2\n")
    config = build_config("phantom", str(path), {"grid.N": "16"})
    assert isinstance(config, ExperimentConfig)
    assert (config.grid.N, config.grid.L, config.transform.m) == (16, 4.0, 2)
    other = build_config("forward", str(path), {})
    assert other.grid.N == 32
    assert other.grid.L != 4.0
    with pytest.raises(ValueError):
        build_config("phantom", str(tmp_path / "missing.env"), {})
    with pytest.raises(ValidationError):
        build_config("phantom", None, {"grid.N": "31"})
    with pytest.raises(ValidationError):
        build_config("phantom", None, {"grid.colour": "red"})


def test_transform_signatures_from_text():
    config = build_config("forward", None, {"transform.signatures": "1,0;0,1"})
    assert config.signature_list() == [(1, 0), (0, 1)]
    assert build_config("forward", None, {}).signature_list() is None


@pytest.mark.parametrize('argv', [
    ["sideways"],
    ["phantom", "--grid.N=7"],
    ["phantom", "--input=/nonexistent/field.tfld"],
    ["phantom", "stray"],
    ["invert", "--no-console"],
])
def test_usage_errors(tmp_path, argv):
    assert main(argv + [f"--output={tmp_path}"]) == EXIT_USAGE


def test_phantom_writes_a_field_and_a_run_log(tmp_path):
    assert main(["phantom", f"--output={tmp_path}"] + SMALL) == EXIT_OK
    f = load_field(tmp_path / "phantom.tfld")
    assert (f.n, f.m, f.grid.size) == (2, 1, 32)
    log = [json.loads(line) for line in (tmp_path / "run_log.jsonl").read_text().splitlines()]
    assert any(entry["message"].startswith("Completed: phantom") for entry in log)
    assert not RunReportPrinter(tmp_path).get_stage_performance().empty


def test_run_log_carries_command_seed_verdict_and_exit_code(tmp_path):
    assert main(["phantom", f"--output={tmp_path}", "--seed=11"] + SMALL) == EXIT_OK
    log = [json.loads(line) for line in (tmp_path / "run_log.jsonl").read_text().splitlines()]
    assert log and all(entry["command"] == "phantom" and entry["seed"] == 11 for entry in log)
    completed = [entry for entry in log if entry["message"].startswith("Completed: phantom")]
    assert completed and "verdict: pass" in completed[-1]["message"]
    exits = [entry for entry in log if (entry.get("extra_data") or {}).get("exit_code") is not None]
    assert [entry["extra_data"]["exit_code"] for entry in exits] == ["0"]
    assert exits[-1]["message"] == "phantom exited with code 0"


def test_forward_then_invert(tmp_path):
    assert main(["phantom", f"--output={tmp_path}"] + SMALL) == EXIT_OK
    assert main(["forward", f"--output={tmp_path}", "--directions.count=64"] + SMALL) == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "sinograms").glob("*.sino")) == ["sino_0_1.sino", "sino_1_0.sino"]
    argv = [
        "invert", f"--output={tmp_path}", f"--input={tmp_path / 'sinograms'}",
        f"--reference={tmp_path / 'phantom.tfld'}", "--tolerances.inversion=1.0",
    ]
    assert main(argv + SMALL) == EXIT_OK
    report = json.loads((tmp_path / "inversion_report.json").read_text())
    assert report["verdict"] == "pass"
    assert [stage["component"] for stage in report["stages"]] == [0, 1]


def test_failed_checker_exit_code(tmp_path):
    argv = ["slice-check", f"--output={tmp_path}", "--directions.count=16", "--tolerances.slice=0"]
    assert main(argv + SMALL) == EXIT_CHECK_FAILED
    report = json.loads((tmp_path / "slice_report.json").read_text())
    assert report["verdict"] == "fail"
    assert len(report["checks"]) == 2


def test_summary_table(tmp_path, capsys):
    results = [
        SuiteResult(suite="fourier-slice", metric="max relative error", value=2e-5, threshold=1e-3,
                    verdict=Verdict.passed, seconds=0.4),
        SuiteResult(suite="ucp-even", metric="min margin", value=1e-4, threshold=1e-3, verdict=Verdict.failed),
    ]
    printer = RunReportPrinter(tmp_path)
    table = pd.read_csv(printer.write_summary(results))
    assert list(table["suite"]) == ["fourier-slice", "ucp-even"]
    assert list(table["verdict"]) == ["pass", "fail"]
    printer.print_summary("selftest", results)
    out = capsys.readouterr().out
    assert "Passed: 1/2" in out
    assert "Failed: ucp-even" in out
    assert printer.get_error_summary() == {"total_errors": 0, "error_breakdown": []}
