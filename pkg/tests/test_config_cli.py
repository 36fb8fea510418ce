import json
import subprocess
import sys

import pytest

from bbma.cli import main
from bbma.config import ConfigError, build_config, parse_config
from bbma.experiments import ExperimentConfig

SMALL = """
seed = 5
check_n = 20
check_seeds = 3
[array]
nx = 8
ny = 8
[fig3]
n_values = [1, 10]
trials = 4
[fig4]
n_values = [10]
trials = 2
stress_n = 10
stress_drops = 3
[fig5]
n_bits_values = [1, 2]
bits_per_point = 2000
chunk_words = 500
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def test_empty_config_gives_defaults(tmp_path):
    p = tmp_path / "empty.toml"
    p.write_text("")
    assert parse_config(p) == ExperimentConfig()
    assert parse_config(None) == ExperimentConfig()


def test_type_error_names_key():
    with pytest.raises(ConfigError, match=r"cell\.target_sinr_db.*'abc'"):
        build_config({"cell": {"target_sinr_db": "abc"}})


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match=r"cell\.foo"):
        build_config({"cell": {"foo": 1}})
    with pytest.raises(ConfigError, match="bogus"):
        build_config({"bogus": 1})


def test_invalid_value_rejected():
    with pytest.raises(ConfigError, match="bandwidth_hz"):
        build_config({"cell": {"bandwidth_hz": -1.0}})


def test_profile_and_overrides():
    assert build_config({}, profile="paper").array.size == 4096
    cfg = build_config({"profile": "paper", "array": {"nx": 16, "ny": 16}, "seed": 3}, seed=9)
    assert cfg.array.size == 256 and cfg.seed == 9
    assert build_config({"cell": {"target_sinr_db": 12}}).cell.target_sinr_db == 12.0


def test_malformed_toml_reports_line(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("seed = 1\n[cell\n")
    with pytest.raises(ConfigError, match="line 2"):
        parse_config(p)


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand_and_bad_seed():
    assert main(["fig9"]) == 1
    assert main(["fig3", "--seed", "-4"]) == 1


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('[cell]\ntarget_sinr_db = "abc"\n')
    assert main(["fig3", "--config", str(p), "--out", str(tmp_path / "x.csv")]) == 1
    assert "cell.target_sinr_db" in capsys.readouterr().err


def test_ceiling_exit_code(tmp_path):
    p = tmp_path / "tight.toml"
    p.write_text("condition_ceiling = 1.0\ncheck_n = 10\ncheck_seeds = 1\n[array]\nnx = 8\nny = 8\n")
    out = tmp_path / "cw.csv"
    assert main(["check-weights", "--config", str(p), "--out", str(out)]) == 2
    manifest = json.loads((tmp_path / "cw.manifest.json").read_text())
    assert manifest["exit_code"] == 2


def test_table1_demo_output(tmp_path, capsys):
    assert main(["table1-demo", "--out", str(tmp_path / "t1.csv")]) == 0
    text = capsys.readouterr().out
    assert "S1->Class2" in text and "S2->Class1" in text
    assert "move (T4, T10) from Class1 to Class2" in text
    assert "move (T3, T6) from Class2 to Class1" in text
    assert "total moves: 4" in text


def test_outputs_and_profile_in_meta(tmp_path, small_cfg):
    out = tmp_path / "f3.csv"
    assert main(["fig3", "--config", str(small_cfg), "--out", str(out), "--raw", "--profile", "paper"]) == 0
    meta = json.loads((tmp_path / "f3.meta").read_text())
    # file [array] wins over the profile
    assert meta["array"] == "8x8" and meta["profile"] == "paper" and meta["seed"] == 5
    assert (tmp_path / "f3_raw.csv").read_text().startswith("experiment,")
    manifest = json.loads((tmp_path / "f3.manifest.json").read_text())
    assert manifest["master_seed"] == 5 and manifest["exit_code"] == 0


@pytest.mark.parametrize("cmd", ["fig3", "fig4", "fig5", "check-weights", "table1-demo"])
def test_runs_are_bitwise_repeatable(tmp_path, small_cfg, cmd):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}" / "r.csv"
        assert main([cmd, "--config", str(small_cfg), "--out", str(out), "--raw"]) == 0
        m = json.loads((out.parent / "r.manifest.json").read_text())
        for key in ("started_at", "finished_at", "elapsed_s", "outputs"):
            m.pop(key)
        outs.append((out.read_bytes(), (out.parent / "r.meta").read_bytes(), m))
    assert outs[0] == outs[1]


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "bbma", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "bbma" in r.stdout
