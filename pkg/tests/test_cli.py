import csv
import json
from pathlib import Path

import numpy as np
import pytest

from remote_survival.cli import EXPERIMENTS, load_config, main, parse_config
from remote_survival.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _stable(path):
    lines = Path(path).read_bytes().splitlines()
    return [ln for ln in lines if b'"timing"' not in ln]


class TestParse:
    def test_empty(self):
        with pytest.raises(ConfigError):
            parse_config({})

    def test_unknown_top_level(self):
        with pytest.raises(ConfigError, match="top-level"):
            parse_config({"experiment": "spectral", "model": {"D": [[-1]], "c": 1}, "foo": 1})

    def test_unknown_parameter(self):
        with pytest.raises(ConfigError, match="unknown parameters"):
            parse_config({"experiment": "interchange", "model": {"D": [[-1]], "c": 1},
                          "params": {"lambdas": [[1]], "bogus": 2}})

    def test_missing_parameter(self):
        with pytest.raises(ConfigError, match="missing"):
            parse_config({"experiment": "simulate", "model": {"D": [[-1]], "c": 1}})

    def test_subcommand_mismatch(self):
        with pytest.raises(ConfigError, match="subcommand"):
            parse_config({"experiment": "spectral", "model": {"D": [[-1]], "c": 1}}, "laws")

    def test_default_experiment_and_json_matrix(self):
        cfg = parse_config({"model": {"D": "[[-1, 1], [0, -2]]", "c": 2}}, "spectral")
        assert cfg.experiment == "spectral"
        np.testing.assert_array_equal(cfg.D, [[-1, 1], [0, -2]])

    def test_hash_tracks_raw_bytes(self, tmp_path):
        a = load_config(_write(tmp_path, (CONFIGS / "spectral.toml").read_text(), "a.toml"))
        b = load_config(_write(tmp_path, (CONFIGS / "spectral.toml").read_text() + "\n", "b.toml"))
        assert a.sha256 != b.sha256

    @pytest.mark.parametrize("path", [p for p in sorted(CONFIGS.glob("*.toml"))
                                      if not p.stem.startswith("verify")], ids=lambda p: p.stem)
    def test_shipped_configs_parse(self, path):
        assert load_config(path).experiment in EXPERIMENTS


class TestRun:
    def test_spectral(self, tmp_path):
        out = tmp_path / "o"
        assert main(["spectral", str(CONFIGS / "spectral.toml"), "--out", str(out)]) == 0
        data = json.loads((out / "spectral.json").read_text())
        np.testing.assert_allclose(data["mu"], 0.0, atol=1e-14)
        np.testing.assert_allclose(data["xi"], [0.5, 0.5], atol=1e-14)
        man = json.loads((out / "manifest.json").read_text())
        assert man["pass"] and man["experiment"] == "spectral"
        assert "spectral.json" in man["outputs"] and "wall_time_s" in man["timing"]

    def test_interchange_value(self, tmp_path):
        out = tmp_path / "o"
        assert main(["interchange", "--config", str(CONFIGS / "interchange.toml"),
                     "--out", str(out)]) == 0
        rows = list(csv.DictReader((out / "interchange.csv").open()))
        np.testing.assert_allclose(float(rows[0]["t_then_theta"]), 0.25, atol=1e-6)
        np.testing.assert_allclose(float(rows[0]["theta_then_t"]), 0.25, atol=1e-6)

    def test_cumulant_csv(self, tmp_path):
        out = tmp_path / "o"
        assert main(["cumulant", str(CONFIGS / "cumulant_table.toml"), "--out", str(out)]) == 0
        with (out / "cumulant.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "t" and len(rows) == 102
        np.testing.assert_allclose([float(x) for x in rows[1][1:3]], [1.0, 0.5])

    def test_empty_config_exit_2(self, tmp_path, capsys):
        assert main(["run", _write(tmp_path, ""), "--out", str(tmp_path / "o")]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config_exit_2(self, tmp_path):
        assert main(["spectral", "--out", str(tmp_path / "o")]) == 2
        assert main(["spectral", str(tmp_path / "nope.toml")]) == 2

    def test_unknown_parameter_exit_2(self, tmp_path):
        text = (CONFIGS / "interchange.toml").read_text().replace("[params]", "[params]\nfoo = 1")
        assert main(["run", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2

    def test_invalid_model_exit_2(self, tmp_path):
        text = 'experiment = "spectral"\n[model]\nD = [[-1, -1], [1, -1]]\nc = 1\n'
        assert main(["run", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2

    def test_refuses_overwrite(self, tmp_path):
        out = str(tmp_path / "o")
        cfg = str(CONFIGS / "spectral.toml")
        assert main(["run", cfg, "--out", out]) == 0
        assert main(["run", cfg, "--out", out]) == 2
        assert main(["run", cfg, "--out", out, "--force"]) == 0

    def test_failed_assertion_exit_1(self, tmp_path):
        text = (CONFIGS / "interchange.toml").read_text().replace("value = 0.25", "value = 0.3")
        out = tmp_path / "o"
        assert main(["run", _write(tmp_path, text), "--out", str(out)]) == 1
        assert json.loads((out / "manifest.json").read_text())["pass"] is False

    def test_byte_identical_reruns(self, tmp_path):
        text = (CONFIGS / "simulate.toml").read_text().replace("20000", "2000")
        cfg = _write(tmp_path, text)
        for name in ("a", "b"):
            assert main(["simulate", cfg, "--out", str(tmp_path / name)]) == 0
        for f in ("ensemble.bin", "ensemble.json", "laplace.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        assert _stable(tmp_path / "a" / "manifest.json") == _stable(tmp_path / "b" / "manifest.json")

    def test_seed_override(self, tmp_path):
        text = (CONFIGS / "simulate.toml").read_text().replace("20000", "500")
        cfg = _write(tmp_path, text)
        assert main(["simulate", cfg, "--out", str(tmp_path / "a")]) == 0
        assert main(["simulate", cfg, "--out", str(tmp_path / "b"), "--seed", "8"]) == 0
        a = (tmp_path / "a" / "ensemble.bin").read_bytes()
        assert a != (tmp_path / "b" / "ensemble.bin").read_bytes()
        assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 8


class TestVerify:
    def test_list(self, capsys):
        assert main(["verify", "--list"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert [ln.split()[0] for ln in lines] == [f"A{i}" for i in range(1, 12)]

    def test_only_writes_json(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["verify", "--only", "A2", "A11", "--out", str(out)]) == 0
        data = json.loads((out / "acceptance.json").read_text())
        assert [r["id"] for r in data["criteria"]] == ["A2", "A11"]
        assert "2/2 criteria passed" in capsys.readouterr().out

    def test_negative_control(self, tmp_path, capsys):
        cfg = str(CONFIGS / "verify_negative_control.toml")
        assert main(["verify", cfg, "--only", "A3"]) == 1
        assert "A3 FAIL" in capsys.readouterr().out

    def test_unknown_criterion(self):
        assert main(["verify", "--only", "A99"]) == 2

    def test_unknown_override(self, tmp_path):
        cfg = _write(tmp_path, "[acceptance.A2]\nnot_a_param = 1\n")
        assert main(["verify", cfg, "--only", "A2"]) == 2
