import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from nvparallel import acceptance
from nvparallel.cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from nvparallel.config import RunConfig, parse_config
from nvparallel.errors import ConfigError
from nvparallel.simulator import read_records_binary


def run(argv, **kw):
    out = io.StringIO()
    code = main(argv, stdout=out, **kw)
    return code, out.getvalue()


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def files_of(d):
    out = {}
    for name in sorted(os.listdir(d)):
        with open(os.path.join(d, name), "rb") as fh:
            out[name] = fh.read()
    return out


# --- config -----------------------------------------------------------------

def test_config_unknown_key_names_its_line():
    text = '{\n  "schema_version": 1,\n  "sed": 4\n}\n'
    with pytest.raises(ConfigError, match=r"cfg.json:3: unknown key 'sed'"):
        parse_config(text, "cfg.json")


def test_config_needs_schema_version():
    with pytest.raises(ConfigError, match="schema_version"):
        parse_config('{"seed": 1}')
    with pytest.raises(ConfigError, match="unsupported"):
        parse_config('{"schema_version": 2}')


def test_config_type_errors():
    with pytest.raises(ConfigError, match=":2:"):
        parse_config('{"schema_version": 1,\n "seed": "x"}')
    with pytest.raises(ConfigError, match="out of range"):
        parse_config('{"schema_version": 1, "shots": 0}')
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config('{"schema_version": 1,')


def test_inline_scenario_block():
    cfg = parse_config('{"schema_version": 1, "scenario": {"name": "conditional-init", "n_nvs": 4}}')
    assert cfg.scenario == "conditional-init"
    assert cfg.params == {"n_nvs": 4}


def test_config_hash_ignores_paths_and_threads():
    a = RunConfig(command="plan", seed=3, out="x", threads=1)
    b = RunConfig(command="plan", seed=3, out="y", threads=8)
    assert a.hash == b.hash
    assert a.hash != RunConfig(command="plan", seed=4).hash


# --- exit codes ---------------------------------------------------------------

def test_unknown_scenario_parameter_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n  "schema_version": 1,\n  "scenario": "conditional-init",\n  "params": {\n    "atempts": 3\n  }\n}\n')
    code, _ = run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert f"{cfg}:5:" in capsys.readouterr().err


def test_bad_flags_are_config_errors(tmp_path):
    assert run(["simulate"])[0] == EXIT_CONFIG
    assert run(["teleport"])[0] == EXIT_CONFIG
    assert run(["simulate", "--scenario", "nope", "--out", str(tmp_path)])[0] == EXIT_CONFIG
    assert run(["plan", "--seed", "-1", "--out", str(tmp_path)])[0] == EXIT_CONFIG
    assert run(["analyze"])[0] == EXIT_CONFIG


def test_missing_input_is_runtime_error(tmp_path):
    assert run(["analyze", "--input", str(tmp_path / "absent.nvsr"), "--out", str(tmp_path)])[0] == EXIT_RUNTIME


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("NVSIM_THREADS", "many")
    assert run(["plan", "--out", str(tmp_path)])[0] == EXIT_CONFIG
    monkeypatch.setenv("NVSIM_THREADS", "3")
    argv = ["simulate", "--scenario", "charge-histogram", "--shots", "20000"]
    assert run(argv + ["--out", str(tmp_path / "env")])[0] == EXIT_OK
    monkeypatch.delenv("NVSIM_THREADS")
    assert run(argv + ["--out", str(tmp_path / "one")])[0] == EXIT_OK
    assert files_of(tmp_path / "env") == files_of(tmp_path / "one")


# --- outputs ------------------------------------------------------------------

def test_simulate_conditional_init(tmp_path):
    code, text = run(["simulate", "--scenario", "conditional-init", "--shots", "5000", "--seed", "5",
                      "--out", str(tmp_path), "--param", "n_nvs=6", "--param", "attempts=4"])
    assert code == EXIT_OK
    assert "unconditional_mean" in text
    s = read_json(tmp_path / "summary.json")
    assert s["seed"] == 5 and s["n_nvs"] == 6 and len(s["mean_by_attempt"]) == 5
    traj = np.loadtxt(tmp_path / "trajectory.csv", delimiter=",", skiprows=1)
    assert traj.shape == (5, 4)
    code, _ = run(["analyze", "--input", str(tmp_path / "trajectory.csv"), "--param", "n_nvs=6",
                   "--out", str(tmp_path / "fit")])
    assert code == EXIT_OK
    fit = read_json(tmp_path / "fit" / "conditional_fit.json")
    assert abs(fit["c1"] - s["model"]["c1"]) < 5 * fit["stderr"]["c1"] + 0.02


def test_alias_name_is_accepted(tmp_path):
    code, _ = run(["simulate", "--scenario", "fig2-conditional-init", "--shots", "200", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert read_json(tmp_path / "summary.json")["scenario"] == "conditional-init"


def test_histogram_simulate_and_fit(tmp_path):
    code, _ = run(["simulate", "--scenario", "charge-histogram", "--shots", "30000", "--out", str(tmp_path),
                   "--param", "frames=2", "--param", 'format="both"'])
    assert code == EXIT_OK
    assert {"records.nvsr", "records.csv", "histogram_nv0.csv", "frame_00000.pgm", "frame_00001.pgm"} <= set(os.listdir(tmp_path))
    code, _ = run(["fit", "--input", str(tmp_path / "histogram_nv0.csv"), "--out", str(tmp_path / "f1")])
    assert code == EXIT_OK
    rep = read_json(tmp_path / "f1" / "fit_report.json")["histogram"]
    rec = read_records_binary(tmp_path / "records.nvsr")
    assert rep["threshold"] == pytest.approx(rec.thresholds[0], abs=3.0)
    code, _ = run(["fit", "--input", str(tmp_path / "records.csv"), "--param", "nv_id=0", "--out", str(tmp_path / "f2")])
    assert code == EXIT_OK
    assert set(read_json(tmp_path / "f2" / "fit_report.json")) >= {"0", "input_kind"}


def test_reference_spread_is_shot_noise(tmp_path):
    code, _ = run(["simulate", "--scenario", "correlation-reference", "--shots", "200000", "--seed", "1",
                   "--out", str(tmp_path)])
    assert code == EXIT_OK
    code, _ = run(["analyze", "--input", str(tmp_path / "records.nvsr"), "--scenario", "correlation-reference",
                   "--out", str(tmp_path / "a")])
    assert code == EXIT_OK
    rep = read_json(tmp_path / "a" / "analysis_report.json")
    # 45 pairs of 1/sqrt(n)-wide noise: 0.00224 with about 11 % relative scatter
    assert rep["offdiag_std"] == pytest.approx(1 / np.sqrt(2e5), rel=0.35)
    assert rep["correlation_stderr"] == pytest.approx(1 / np.sqrt(2e5 - 3))


def test_analyze_block_pattern(tmp_path):
    run(["simulate", "--scenario", "correlation-block", "--shots", "100000", "--seed", "2", "--out", str(tmp_path)])
    code, _ = run(["analyze", "--input", str(tmp_path / "records.nvsr"), "--param", 'pattern="block"',
                   "--out", str(tmp_path / "a")])
    assert code == EXIT_OK
    rep = read_json(tmp_path / "a" / "analysis_report.json")
    assert rep["n_pairs"] == 45
    assert rep["sign_matches"] >= 40


def test_plan_outputs(tmp_path):
    code, text = run(["plan", "--out", str(tmp_path)])
    assert code == EXIT_OK
    rep = read_json(tmp_path / "plan_report.json")
    assert rep["crossover_n"] <= 10
    assert rep["binding_aod"] == "520nm"
    assert rep["scalability"]["bulk"]["flagged"] is True
    for name in ("independent_vs_n.csv", "independent_vs_t.csv", "correlated_vs_n.csv", "beam_size.csv"):
        assert (tmp_path / name).stat().st_size > 0


def test_same_seed_same_bytes(tmp_path):
    argv = ["simulate", "--scenario", "correlation-orientation", "--shots", "3000", "--seed", "9"]
    run(argv + ["--out", str(tmp_path / "a")])
    run(argv + ["--out", str(tmp_path / "b"), "--threads", "4"])
    run(["simulate", "--scenario", "correlation-orientation", "--shots", "3000", "--seed", "10",
         "--out", str(tmp_path / "c")])
    a, b, c = files_of(tmp_path / "a"), files_of(tmp_path / "b"), files_of(tmp_path / "c")
    assert a == b
    assert a["records.nvsr"] != c["records.nvsr"]


def test_reproduce_exit_code_and_report(tmp_path, monkeypatch):
    # two fast criteria, one forced to fail
    passing = acceptance.CHECKS[6]
    failing = acceptance._timed(99, "always fails")(lambda seed: (False, "by construction"))
    monkeypatch.setattr(acceptance, "CHECKS", (passing,))
    code, text = run(["reproduce", "--out", str(tmp_path / "ok")])
    assert code == EXIT_OK
    assert "[PASS]" in (tmp_path / "ok" / "acceptance.txt").read_text()
    monkeypatch.setattr(acceptance, "CHECKS", (passing, failing))
    code, text = run(["reproduce", "--out", str(tmp_path / "bad")])
    assert code == EXIT_ACCEPTANCE
    assert "1/2 criteria passed" in text


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nvparallel.cli", "plan", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "crossover_n" in proc.stdout
