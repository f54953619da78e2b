"""Config parsing, env overrides, CSV contract, CLI exit codes."""

import os
import subprocess
import sys

import numpy as np
import pytest

from aiotsim import cli, config, experiments
from aiotsim.errors import ConfigError
from aiotsim.util import trial_rng

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def write_config(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


MINIMAL = """
[experiment]
kind = ber-sweep
seed = 7

[sweep]
snr_db = 0, 4
bits_per_point = 4960
csi = perfect
"""


class TestLoadConfig:
    def test_defaults_resolved(self, tmp_path):
        cfg = config.load_config(write_config(tmp_path, MINIMAL))
        assert cfg.kind == "ber-sweep"
        assert cfg.seed == 7
        assert cfg["phy"]["modulation"] == "bpsk"
        assert cfg["channel"]["carrier_frequency_hz"] == 925e6
        assert cfg["sweep"]["snr_db"] == (0.0, 4.0)

    def test_unknown_key_rejected(self, tmp_path):
        bad = MINIMAL + "\n[phy]\nmodulatoin = bpsk\n"
        with pytest.raises(ConfigError):
            config.load_config(write_config(tmp_path, bad))

    def test_unknown_section_rejected(self, tmp_path):
        bad = MINIMAL + "\n[phyy]\nmodulation = bpsk\n"
        with pytest.raises(ConfigError):
            config.load_config(write_config(tmp_path, bad))

    def test_out_of_range_rejected(self, tmp_path):
        bad = MINIMAL.replace("seed = 7", "seed = -3")
        with pytest.raises(ConfigError):
            config.load_config(write_config(tmp_path, bad))

    def test_kind_required(self, tmp_path):
        with pytest.raises(ConfigError):
            config.load_config(write_config(tmp_path, "[phy]\nmodulation = ook\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            config.load_config(str(tmp_path / "absent.ini"))

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AIOT_EXPERIMENT_SEED", "99")
        monkeypatch.setenv("AIOT_PHY_SAMPLES_PER_SYMBOL", "4")
        cfg = config.load_config(write_config(tmp_path, MINIMAL))
        assert cfg.seed == 99
        assert cfg["phy"]["samples_per_symbol"] == 4

    def test_unknown_env_override_rejected(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AIOT_PHY_NO_SUCH_KEY", "1")
        with pytest.raises(ConfigError):
            config.load_config(write_config(tmp_path, MINIMAL))

    def test_cli_overrides_beat_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AIOT_EXPERIMENT_SEED", "99")
        cfg = config.load_config(write_config(tmp_path, MINIMAL),
                                 seed_override=123)
        assert cfg.seed == 123


class TestDescribe:
    def test_lists_assumption_defaults(self, tmp_path):
        cfg = config.load_config(write_config(tmp_path, MINIMAL))
        text = "\n".join(config.resolved_lines(cfg))
        assert "channel.carrier_frequency_hz = 925000000" in text
        assert "const.crc_polynomial = 0x1021" in text
        assert "const.preamble_word = 0xf0b7" in text
        assert "const.harvest_efficiency_default = 0.30" in text


class TestWilsonInterval:
    def test_degenerate(self):
        assert experiments.wilson_interval(0, 0) == (0.0, 1.0)

    def test_contains_point_estimate(self):
        lo, hi = experiments.wilson_interval(13, 1000)
        assert lo < 13 / 1000 < hi

    def test_coverage_at_small_scale(self):
        # deterministic statistical check: the 95% interval contains the
        # analytic BER in well over 93% of independent-seed repeats
        from scipy.special import erfc
        gamma = 10 ** 0.4
        p_true = 0.5 * erfc(np.sqrt(2 * gamma) / np.sqrt(2))
        covered = 0
        repeats = 200
        n = 4000
        for k in range(repeats):
            rng = trial_rng(5000, k)
            errs = int(np.sum(rng.random(n) < p_true))
            lo, hi = experiments.wilson_interval(errs, n)
            covered += lo <= p_true <= hi
        assert covered / repeats >= 0.93


class TestRunners:
    def test_ber_sweep_columns_and_oracle(self, tmp_path):
        cfg = config.load_config(write_config(tmp_path, MINIMAL))
        header, rows = experiments.run_ber_sweep(cfg)
        assert header == ["snr_db", "scheme", "rate_bps", "bits", "errors",
                          "ber", "ci_low", "ci_high"]
        from scipy.special import erfc
        for row in rows:
            snr_db, _, _, bits, errors, ber, lo, hi = row
            gamma = 10 ** (float(snr_db) / 10)
            expected = 0.5 * erfc(np.sqrt(2 * gamma) / np.sqrt(2))
            assert float(lo) <= expected <= float(hi)

    def test_snr_sweep_rows(self, tmp_path):
        cfg = config.load_config(write_config(
            tmp_path, "[experiment]\nkind = snr-sweep\nseed = 2\n"
                      "[sweep]\nsnr_db = 6\nsamples_per_phase = 50000\n"))
        header, rows = experiments.run_snr_sweep(cfg)
        assert header == ["snr_db", "est_snr_db", "samples", "error_db"]
        assert abs(float(rows[0][3])) < 0.5

    def test_mac_compare_all_schemes(self, tmp_path):
        cfg = config.load_config(write_config(
            tmp_path, "[experiment]\nkind = mac-compare\nseed = 3\n"
                      "[mac]\nbits_per_device = 5000\n"))
        header, rows = experiments.run_mac_compare(cfg)
        schemes = {row[0] for row in rows}
        assert schemes == {"tdma", "cbma", "noma"}

    def test_topology_run_matches_inventory_contract(self, tmp_path):
        cfg = config.load_config(write_config(
            tmp_path, "[experiment]\nkind = topology-run\nseed = 4\n"
                      "[netsim]\ntopology = 1\nrounds = 3\n"))
        header, rows = experiments.run_topology_run(cfg)
        assert header[0] == "round"
        assert len(rows) == 3
        assert all(row[6] == "1" for row in rows)   # success column


class TestCli:
    def test_run_writes_deterministic_csv(self, tmp_path):
        cfg_path = write_config(tmp_path, MINIMAL)
        out_a = str(tmp_path / "a.csv")
        out_b = str(tmp_path / "b.csv")
        assert cli.main(["run", cfg_path, "--out", out_a]) == 0
        assert cli.main(["run", cfg_path, "--out", out_b]) == 0
        with open(out_a, "rb") as fa, open(out_b, "rb") as fb:
            assert fa.read() == fb.read()

    def test_seed_override_changes_output(self, tmp_path):
        cfg_path = write_config(tmp_path, MINIMAL)
        out_a = str(tmp_path / "a.csv")
        out_b = str(tmp_path / "b.csv")
        cli.main(["run", cfg_path, "--out", out_a, "--seed", "1"])
        cli.main(["run", cfg_path, "--out", out_b, "--seed", "2"])
        with open(out_a, "rb") as fa, open(out_b, "rb") as fb:
            assert fa.read() != fb.read()

    def test_config_error_exit_code_and_no_file(self, tmp_path, capsys):
        bad = write_config(tmp_path, MINIMAL + "\n[sweep]\nbogus = 1\n")
        out = str(tmp_path / "never.csv")
        assert cli.main(["run", bad, "--out", out]) == 2
        assert not os.path.exists(out)

    def test_describe_exit_code(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path, MINIMAL)
        assert cli.main(["describe", cfg_path]) == 0
        lines = capsys.readouterr().out
        assert "channel.carrier_frequency_hz = 925000000" in lines

    def test_console_entry_point_subprocess(self, tmp_path):
        cfg_path = write_config(tmp_path, MINIMAL.replace("4960", "992"))
        out = str(tmp_path / "sub.csv")
        proc = subprocess.run(
            [sys.executable, "-m", "aiotsim.cli", "run", cfg_path, "--out", out],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert os.path.exists(out)

    def test_bundled_example_configs_load(self):
        for name in ("ber_sweep.ini", "snr_sweep.ini", "mac_compare.ini",
                     "topology_run.ini"):
            cfg = config.load_config(os.path.join(CONFIG_DIR, name))
            assert cfg.kind in config.EXPERIMENT_KINDS
