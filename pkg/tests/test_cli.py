import json
import math
import os
import subprocess
import sys

import pytest

from circular_rydberg import cli
from circular_rydberg.dd_engine import ConvergenceError
from circular_rydberg.interactions import InteractionCoefficients

FAST = {
    "measure-budget": [],
    "check-sequence": ["--builtin", "2"],
    "lifetime": [],
    "dd-storage": ["--builtin", "1"],
}
SMALL_STORAGE = "[dd-storage]\nn_atoms = 4\ncycles = 3\n"


def invoke(tmp_path, *argv, config=None, out="out"):
    args = list(argv) + ["--out", str(tmp_path / out)]
    if config is not None:
        cfg = tmp_path / "run.ini"
        cfg.write_text(config)
        args += ["--config", str(cfg)]
    return cli.run(args)


def csv_bodies(folder):
    return {p.name: p.read_bytes() for p in sorted(folder.glob("*.csv"))}


# config handling

def test_empty_config_gives_documented_defaults():
    cfg = cli.validate_config("")
    assert set(cfg) == set(cli.SCHEMA)
    for sec, keys in cli.SCHEMA.items():
        assert cfg[sec] == {k: d for k, (_, d) in keys.items()}


def test_misspelled_key_suggests_nearest():
    with pytest.raises(cli.ConfigError, match="did you mean 'temperature'"):
        cli.validate_config("[dd-motion]\ntempratuer = 1e-5\n")


def test_unknown_section_and_bad_values():
    with pytest.raises(cli.ConfigError, match="dd-storage"):
        cli.validate_config("[dd-storag]\n")
    with pytest.raises(cli.ConfigError):
        cli.validate_config("[dd-storage]\nn_atoms = four\n")
    with pytest.raises(cli.ConfigError):
        cli.validate_config("no section here")


def test_values_are_typed():
    cfg = cli.validate_config("[dd-storage]\ntwirl = yes\nn_atoms = 0x4\nduty = 0.05  # comment\n")
    assert cfg["dd-storage"]["twirl"] is True
    assert cfg["dd-storage"]["n_atoms"] == 4
    assert cfg["dd-storage"]["duty"] == 0.05


# exit codes

def test_usage_errors_exit_64(tmp_path, capsys):
    assert cli.run(["no-such-command"]) == cli.EXIT_USAGE
    assert cli.run(["measure-budget", "--bogus"]) == cli.EXIT_USAGE
    assert cli.run(["check-sequence", "--builtin", "7"]) == cli.EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_validation_errors_exit_2(tmp_path, capsys):
    assert invoke(tmp_path, "dd-motion", config="[dd-motion]\ntempratuer = 1\n") == cli.EXIT_VALIDATION
    assert "temperature" in capsys.readouterr().err
    assert invoke(tmp_path, "measure-budget", "--seed", "-1") == cli.EXIT_VALIDATION
    assert invoke(tmp_path, "measure-budget", config="[measure-budget]\ntau_a_us = 0.01\n") == cli.EXIT_VALIDATION
    assert invoke(tmp_path, "check-sequence", "--sequence-file", str(tmp_path / "missing.txt")) == cli.EXIT_VALIDATION


def test_numerical_failures_exit_3(tmp_path, monkeypatch):
    def boom(args, cfg):
        raise ConvergenceError("step halving changed the result")

    monkeypatch.setitem(cli.COMMANDS, "measure-budget", boom)
    assert invoke(tmp_path, "measure-budget") == cli.EXIT_CONVERGENCE


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "circular_rydberg.cli", "measure-budget", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


# subcommand outputs

def test_measure_budget_defaults(tmp_path):
    assert invoke(tmp_path, "measure-budget") == 0
    doc = json.loads((tmp_path / "out" / "measure-budget.json").read_text())
    assert 1.2e-3 <= doc["summary"]["P_g"] <= 1.4e-3
    prov = doc["provenance"]
    assert prov["seed"] == 0 and len(prov["config_hash"]) == 64 and prov["version"]


def test_check_sequence_flags_condition_6(tmp_path, capsys):
    assert invoke(tmp_path, "check-sequence", "--builtin", "2", "--n-periods", "4") == 0
    out = capsys.readouterr().out
    assert "condition 6: FAIL" in out
    rows = (tmp_path / "out" / "check-sequence.csv").read_text().splitlines()
    assert rows[0] == "condition,status,residual"
    assert rows[6].startswith("6,FAIL")


def test_check_sequence_accepts_sequence_file(tmp_path):
    f = tmp_path / "wahuha.txt"
    f.write_text("# four pulses\n0.125 x 90\n0.375 -y 90\n0.625 y 90\n0.875 -x 90\n")
    assert invoke(tmp_path, "check-sequence", "--sequence-file", str(f)) == 0
    doc = json.loads((tmp_path / "out" / "check-sequence.json").read_text())
    assert doc["config"]["sequence"]["file"] == str(f)


def test_dd_storage_default_cycle_time(tmp_path):
    assert invoke(tmp_path, "dd-storage", "--builtin", "2", config=SMALL_STORAGE) == 0
    doc = json.loads((tmp_path / "out" / "dd-storage.json").read_text())
    expected = 0.021 / abs(InteractionCoefficients.table().J_ss)
    assert math.isclose(doc["summary"]["t_c_s"], expected, rel_tol=1e-12)
    assert doc["config"]["dd-storage"]["t_c"] == doc["summary"]["t_c_s"]


def test_lifetime_tabulated_model_needs_file(tmp_path):
    assert invoke(tmp_path, "lifetime", config="[lifetime]\nmodel = tabulated\n") == cli.EXIT_VALIDATION
    assert invoke(tmp_path, "lifetime", config="[lifetime]\nmodel = bandstp\n") == cli.EXIT_VALIDATION


@pytest.mark.parametrize("command", sorted(FAST))
def test_runs_are_byte_identical(tmp_path, command):
    config = SMALL_STORAGE if command == "dd-storage" else ""
    assert invoke(tmp_path, command, *FAST[command], "--seed", "11", config=config, out="a") == 0
    assert invoke(tmp_path, command, *FAST[command], "--seed", "11", config=config, out="b") == 0
    a, b = csv_bodies(tmp_path / "a"), csv_bodies(tmp_path / "b")
    assert a and a == b


def test_seed_changes_monte_carlo_output(tmp_path):
    assert invoke(tmp_path, "dd-storage", "--seed", "1", config=SMALL_STORAGE, out="a") == 0
    assert invoke(tmp_path, "dd-storage", "--seed", "2", config=SMALL_STORAGE, out="b") == 0
    assert csv_bodies(tmp_path / "a") != csv_bodies(tmp_path / "b")


def _config_from_json(doc):
    """Rebuild an INI config and sequence flags from a JSON summary."""
    lines, flags = [], []
    for sec, values in doc["config"].items():
        if sec == "sequence":
            flags = ["--builtin", str(values["builtin"])] if "builtin" in values else ["--sequence-file", values["file"]]
            continue
        lines.append(f"[{sec}]")
        lines += [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in values.items() if v is not None]
    return "\n".join(lines) + "\n", flags


@pytest.mark.parametrize("command", ["dd-storage", "lifetime", "measure-budget"])
def test_json_summary_reproduces_csv(tmp_path, command):
    config = SMALL_STORAGE + "[global]\nsamples = 7\n" if command == "dd-storage" else ""
    assert invoke(tmp_path, command, *FAST[command], "--seed", "5", config=config, out="first") == 0
    doc = json.loads((tmp_path / "first" / f"{command}.json").read_text())
    text, flags = _config_from_json(doc)
    assert invoke(tmp_path, command, *flags, config=text, out="again") == 0
    assert csv_bodies(tmp_path / "first") == csv_bodies(tmp_path / "again")


def test_no_writes_outside_output_directory(tmp_path, monkeypatch):
    work = tmp_path / "work"
    work.mkdir()
    monkeypatch.chdir(work)
    for command, extra in FAST.items():
        config = SMALL_STORAGE if command == "dd-storage" else ""
        assert invoke(tmp_path, command, *extra, config=config, out="results") == 0
    assert os.listdir(work) == []
    outside = {p.name for p in tmp_path.iterdir()}
    assert outside == {"work", "results", "run.ini"}


def test_csv_uses_exact_float_repr():
    text = cli.csv_text(["a", "b", "c"], [{"a": 0.1, "b": True, "c": 3}])
    assert text == "a,b,c\n0.1,true,3\n"
