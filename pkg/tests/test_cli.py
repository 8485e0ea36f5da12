import json
import subprocess
import sys

import pytest

from gequation.cli import SUBCOMMANDS, resolve_params, run


def _json_line(out):
    return json.loads(out.strip().splitlines()[-1])


def test_exact_shear_prints_two(tmp_path, capsys):
    assert run(["exact-shear", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip() == "2.0"
    result = json.loads((tmp_path / "result.json").read_text())
    assert result["estimate"] == 2.0 and result["converged"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["subcommand"] == "exact-shear" and manifest["params"]["p"] == "0,1"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gequation", "exact-shear", "--p", "0.5,1", "--out", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert float(proc.stdout) == 2.0


def test_hbar_json_and_tables(tmp_path, capsys):
    code = run(["hbar", "--flow", "cellular", "--A", "1", "--n", "32", "--T", "20", "--out", str(tmp_path)])
    assert code == 0
    line = _json_line(capsys.readouterr().out)
    assert line["converged"] and line["estimate"] >= 1.0
    header = (tmp_path / "mean_history.csv").read_text().splitlines()[0]
    assert header == "t,mean_v"


def test_unconverged_run_exits_two(tmp_path, capsys):
    code = run(["hbar", "--flow", "cellular", "--A", "8", "--n", "32", "--T", "1", "--out", str(tmp_path)])
    assert code == 2
    assert not _json_line(capsys.readouterr().out)["converged"]
    assert not json.loads((tmp_path / "result.json").read_text())["converged"]


@pytest.mark.parametrize("argv", [
    ["hbar", "--bogus", "1"],
    ["nosuch"],
    [],
    ["hbar", "--n", "sixteen"],
    ["replay"],
])
def test_usage_errors_exit_one(argv, capsys):
    assert run(argv) == 1
    assert "usage error" in capsys.readouterr().err


def test_config_errors_exit_one(tmp_path, capsys):
    assert run(["hbar", "--method", "weird", "--n", "16", "--T", "1", "--out", str(tmp_path / "a")]) == 1
    assert run(["strain-shear", "--p-prime", "0.01", "--out", str(tmp_path / "b")]) == 1
    assert run(["hbar", "--config", str(tmp_path / "missing.toml")]) == 1
    bad = tmp_path / "bad.toml"
    bad.write_text("n = [\n")
    assert run(["hbar", "--config", str(bad)]) == 1
    unknown = tmp_path / "unknown.toml"
    unknown.write_text("colour = 'blue'\n")
    assert run(["hbar", "--config", str(unknown)]) == 1
    err = capsys.readouterr().err
    assert err.count("config error") == 5


def test_budget_error_exits_one(tmp_path, capsys):
    assert run(["hbar", "--n", "2048", "--budget", "1e6", "--out", str(tmp_path)]) == 1
    assert "budget error" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text('flow = "cellular"\nA = 1.0\nn = 16\nT = 20.0\n')
    assert run(["hbar", "--config", str(cfg), "--n", "32", "--out", str(tmp_path / "o")]) == 0
    params = json.loads((tmp_path / "o" / "manifest.json").read_text())["params"]
    assert params["n"] == 32 and params["flow"] == "cellular" and params["T"] == 20.0


def test_resolve_params_order():
    params = resolve_params("hbar", {"n": 64}, {"n": 16, "A": "2.5"})
    assert params["n"] == 64 and params["A"] == 2.5 and params["T"] == 20.0


def test_replay_is_byte_identical(tmp_path):
    first = tmp_path / "first"
    assert run(["reach", "--n", "32", "--out", str(first)]) == 0
    second = tmp_path / "second"
    assert run(["replay", str(first / "manifest.json"), "--out", str(second)]) == 0
    assert (first / "arrival.csv").read_bytes() == (second / "arrival.csv").read_bytes()
    assert (first / "manifest.json").read_bytes() == (second / "manifest.json").read_bytes()


def test_every_subcommand_has_help(capsys):
    for sub in SUBCOMMANDS:
        with pytest.raises(SystemExit) as exc:
            run([sub, "--help"])
        assert exc.value.code == 0
    assert "--out" in capsys.readouterr().out
