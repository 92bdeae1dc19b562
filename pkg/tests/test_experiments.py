import json

import pytest

from esrf.cli import main as cli_main
from esrf.errors import ConfigError
from esrf.experiments import (
    ExperimentConfig,
    parse_config,
    resolve_model,
    resolve_workers,
    run,
)

SMALL_RATE_CONFIG = """
# quick discrete sweep
kind = convergence-discrete
model = scalar-linear
m_list = 8,16,32,64
steps = 5
replications = 8
seed = 42
n_boot = 200
"""


class TestParseConfig:
    def test_round_trip(self):
        cfg = parse_config(SMALL_RATE_CONFIG)
        assert cfg.kind == "convergence-discrete"
        assert cfg.m_list == (8, 16, 32, 64)
        assert cfg.replications == 8
        assert cfg.band == (-0.70, -0.30)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            parse_config("kind = consistency\nbogus = 1\n")

    def test_missing_kind(self):
        with pytest.raises(ConfigError):
            parse_config("model = scalar-linear\n")

    def test_bad_kind(self):
        with pytest.raises(ConfigError):
            parse_config("kind = nonsense\n")

    def test_small_m_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("kind = convergence-discrete\nm_list = 1,8,16,32\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError):
            parse_config("kind = consistency\nseed = 1\nseed = 2\n")

    def test_default_replications_by_kind(self):
        assert parse_config("kind = convergence-discrete\n").replications == 64
        assert parse_config("kind = convergence-continuous\n").replications == 16

    def test_inline_linear_model(self):
        cfg = parse_config(
            "kind = consistency\nmodel = inline-linear\n"
            "b = 0.5,0.1;0.0,0.4\nc = 1,0;0,1\nh = 1,0\ngamma = 1\n"
        )
        model = resolve_model(cfg.model, cfg.inline, "discrete")
        assert model.d == 2 and model.q == 1
        assert model.is_linear

    def test_overrides(self):
        cfg = parse_config(SMALL_RATE_CONFIG, overrides={"seed": 7})
        assert cfg.seed == 7


class TestResolveWorkers:
    def test_env_overrides_flag(self, monkeypatch):
        monkeypatch.setenv("ESRF_WORKERS", "3")
        assert resolve_workers(8) == 3

    def test_flag_used_without_env(self, monkeypatch):
        monkeypatch.delenv("ESRF_WORKERS", raising=False)
        assert resolve_workers(8) == 8
        assert resolve_workers(None) == 1

    def test_bad_env(self, monkeypatch):
        monkeypatch.setenv("ESRF_WORKERS", "many")
        with pytest.raises(ConfigError):
            resolve_workers(None)


class TestRunKinds:
    def test_discrete_rate_report_schema(self, tmp_path):
        result = run(parse_config(SMALL_RATE_CONFIG), workers=1, out_dir=tmp_path)
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["experiment"] == "convergence-discrete"
        assert {"M", "D", "se"} <= set(report["points"][0])
        assert len(report["points"]) == 4
        assert isinstance(report["slope"], float)
        assert len(report["slope_ci"]) == 2
        assert isinstance(report["pass"], bool)
        csvs = sorted(tmp_path.glob("errors_M*_r*.csv"))
        assert len(csvs) == 4 * 8
        header = csvs[0].read_text().splitlines()[0]
        assert header == ("k_or_t,M,variant,delta2,delta4,mean_gap,cov_gap,"
                          "trP,trPbarM,stopped_flag")
        assert (tmp_path / "rate.png").exists()
        assert (tmp_path / "series.png").exists()

    def test_continuous_rate_small(self, tmp_path):
        cfg = parse_config(
            "kind = convergence-continuous\nmodel = scalar-linear\n"
            "m_list = 8,16,32,64\nhorizon = 0.1\ndt = 0.005\n"
            "replications = 6\nseed = 3\nn_boot = 200\n"
        )
        result = run(cfg, workers=1, out_dir=tmp_path)
        report = json.loads((tmp_path / "report.json").read_text())
        assert "stopped_fraction" in report
        assert report["stop_threshold"] == pytest.approx(10.0 + 1.0)

    def test_consistency_report_omits_slope(self, tmp_path):
        cfg = ExperimentConfig(kind="consistency", model="scalar-linear",
                               m_list=(2000,), steps=5, seed=1, n_boot=200)
        result = run(cfg, workers=1, out_dir=tmp_path)
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["slope"] is None
        assert result.passed
        assert (tmp_path / "consistency.png").exists()

    def test_transforms_audit_zero_violations(self, tmp_path):
        cfg = ExperimentConfig(kind="transforms-audit", sweeps=50, dim=5, seed=2)
        result = run(cfg, workers=1, out_dir=tmp_path)
        assert result.passed
        assert result.report["violations"] == 0
        assert (tmp_path / "audit_rows.csv").exists()

    def test_spde_audit(self, tmp_path):
        cfg = ExperimentConfig(kind="spde-audit", sweeps=25, dim=4, seed=2)
        result = run(cfg, workers=1, out_dir=tmp_path)
        assert result.passed

    def test_synthetic_power_law_recovers_half(self, tmp_path):
        # end-to-end slope fitting through the real pipeline stays in band
        result = run(parse_config(SMALL_RATE_CONFIG), workers=1)
        assert -0.7 <= result.report["slope"] <= -0.3


class TestDeterminism:
    def test_worker_count_does_not_change_bytes(self, tmp_path, monkeypatch):
        payloads = {}
        for workers in (1, 4):
            out = tmp_path / f"w{workers}"
            monkeypatch.setenv("ESRF_WORKERS", str(workers))
            run(parse_config(SMALL_RATE_CONFIG), out_dir=out)
            payloads[workers] = {
                p.name: p.read_bytes()
                for p in out.iterdir() if p.suffix in (".csv", ".json")
            }
        assert payloads[1] == payloads[4]

    def test_rerun_reproduces_bytes(self, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            run(parse_config(SMALL_RATE_CONFIG), workers=1, out_dir=out)
            outs.append((out / "report.json").read_bytes())
        assert outs[0] == outs[1]


class TestCli:
    def test_version(self, capsys):
        assert cli_main(["version"]) == 0
        assert capsys.readouterr().out.startswith("esrf ")

    def test_run_subcommand(self, tmp_path, capsys):
        cfg_file = tmp_path / "exp.cfg"
        cfg_file.write_text(SMALL_RATE_CONFIG)
        code = cli_main(["run", str(cfg_file), "--out", str(tmp_path / "out"),
                         "--workers", "1"])
        assert code == 0
        assert (tmp_path / "out" / "report.json").exists()

    def test_run_seed_override(self, tmp_path):
        cfg_file = tmp_path / "exp.cfg"
        cfg_file.write_text(SMALL_RATE_CONFIG)
        code = cli_main(["run", str(cfg_file), "--seed", "99",
                         "--out", str(tmp_path / "out"), "--workers", "1"])
        assert code == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["seed"] == 99

    def test_audit_subcommand(self, capsys):
        assert cli_main(["audit-transforms", "--sweeps", "20", "--dim", "4"]) == 0

    def test_bad_config_is_exit_one(self, tmp_path, capsys):
        cfg_file = tmp_path / "bad.cfg"
        cfg_file.write_text("kind = nonsense\n")
        assert cli_main(["run", str(cfg_file)]) == 1

    def test_band_failure_is_exit_two(self, tmp_path):
        # an impossible band turns a healthy run into an acceptance failure
        cfg_file = tmp_path / "exp.cfg"
        cfg_file.write_text(SMALL_RATE_CONFIG + "band = -0.01,0.0\n")
        code = cli_main(["run", str(cfg_file), "--out", str(tmp_path / "out"),
                         "--workers", "1"])
        assert code == 2
