import json

import pytest

from gridgate.cli import main


def test_run_and_summarize(tmp_path, capsys):
    out = tmp_path / "results.csv"
    assert main(["run", "--plan", "vvc_swap_demo", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "wrote 241 rows" in printed
    assert "max_abs_q_pre" in printed
    assert out.read_text().startswith("t,voltage_v,active_power_w,")

    assert main(["summarize", "--in", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["post_window_empty"] is False


def test_run_json_format(tmp_path, capsys):
    out = tmp_path / "results.json"
    assert main(["run", "--plan", "vvc_swap_demo", "--out", str(out), "--format", "json"]) == 0
    capsys.readouterr()
    doc = json.loads(out.read_text())
    assert doc["meta"]["swap_curve_id"] == "VVC2"
    assert len(doc["rows"]) == 241


def test_unknown_plan_exits_nonzero(tmp_path, capsys):
    assert main(["run", "--plan", "missing", "--out", str(tmp_path / "x.csv")]) == 1
    assert "no such file or bundled plan" in capsys.readouterr().err


def test_summarize_missing_file_exits_nonzero(tmp_path, capsys):
    assert main(["summarize", "--in", str(tmp_path / "absent.csv")]) == 1
    assert "error:" in capsys.readouterr().err


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["--help"])
    assert excinfo.value.code == 0
    text = capsys.readouterr().out
    for name in ("run", "summarize", "inverter", "cloud", "gateway"):
        assert name in text
