import csv
import io
import math
import os

import numpy as np
import pytest

from squintsense.cli import echo_config, load_config, main
from squintsense.config import RunConfig, SystemConfig
from squintsense.exceptions import ConfigError

SCALED_LINES = """
m_h = 16
m_v = 16
n_subcarriers = 32
n_candidates = 64
tau_s_db = 25
q_targets = 1
k_users = 0
trials = 2
seed = 3
"""


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run_cli(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def parse_csv(text):
    rows = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(rows))


class TestLoadConfig:
    def test_empty_file_gives_full_scale_defaults(self, tmp_path):
        run = load_config(write_config(tmp_path, ""))
        cfg = run.system
        assert cfg.fc == 30e9
        assert cfg.bandwidth == 6e9
        assert cfg.n_subcarriers == 128
        assert (cfg.m_h, cfg.m_v) == (64, 64)
        assert cfg.height == 40.0
        assert cfg.theta_min == pytest.approx(math.radians(15))
        assert cfg.theta_max == pytest.approx(math.radians(70))
        assert cfg.phi_min == pytest.approx(math.radians(30))
        assert cfg.phi_max == pytest.approx(math.radians(150))
        assert cfg.n_candidates == 4096
        assert cfg.kappa_db == 8.0
        assert cfg.sigma_rcs_dbsm == 10.0
        assert cfg.noise_psd_dbm_hz == -174.0

    def test_degree_keys_converted(self, tmp_path):
        run = load_config(write_config(tmp_path, "theta_min_deg = 20\n"))
        assert run.system.theta_min == pytest.approx(math.radians(20))

    def test_unknown_key_names_key_and_line(self, tmp_path):
        path = write_config(tmp_path, "m_h = 16\nbogus_key = 3\n")
        with pytest.raises(ConfigError) as exc:
            load_config(path)
        assert "bogus_key" in str(exc.value)
        assert "line 2" in str(exc.value)

    def test_ordered_bounds_error_names_both_keys(self, tmp_path):
        path = write_config(tmp_path, "theta_min_deg = 80\ntheta_max_deg = 70\n")
        with pytest.raises(ConfigError) as exc:
            load_config(path)
        msg = str(exc.value)
        assert "theta_min" in msg and "theta_max" in msg

    def test_too_few_subcarriers_rejected(self, tmp_path):
        path = write_config(tmp_path, "n_subcarriers = 1\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_bad_value_reports_line(self, tmp_path):
        path = write_config(tmp_path, "m_h = sixteen\n")
        with pytest.raises(ConfigError) as exc:
            load_config(path)
        assert "line 1" in str(exc.value)

    def test_comments_and_blanks_ignored(self, tmp_path):
        run = load_config(write_config(tmp_path, "# comment\n\nm_h = 8  # trailing\n"))
        assert run.system.m_h == 8

    def test_echo_round_trips(self, tmp_path):
        run = load_config(write_config(tmp_path, SCALED_LINES))
        echoed = "\n".join(echo_config(run)) + "\n"
        again = load_config(write_config(tmp_path, echoed, name="echo.cfg"))
        assert again == run


class TestDispatch:
    def test_no_subcommand_exits_one(self):
        code, _, err = run_cli([])
        assert code == 1
        assert "usage" in err.lower()

    def test_config_error_exits_one(self, tmp_path):
        path = write_config(tmp_path, "n_subcarriers = 1\n")
        code, _, err = run_cli(["simulate", "--config", path])
        assert code == 1
        assert "config error" in err

    def test_simulate_stdout_csv(self, tmp_path):
        path = write_config(tmp_path, SCALED_LINES)
        code, out, err = run_cli(["simulate", "--config", path])
        assert code == 0
        rows = parse_csv(out)
        assert len(rows) == 1
        assert rows[0]["method"] == "proposed"
        assert int(rows[0]["trials_ok"]) == 2
        assert "# " in err  # effective config echoed

    def test_simulate_writes_aggregate_and_trial_files(self, tmp_path):
        cfg_path = write_config(tmp_path, SCALED_LINES)
        out_path = str(tmp_path / "res.csv")
        code, _, _ = run_cli(["simulate", "--config", cfg_path, "--output", out_path])
        assert code == 0
        agg = (tmp_path / "res_aggregate.csv").read_text()
        trials = (tmp_path / "res_trials.csv").read_text()
        assert len(parse_csv(agg)) == 1
        assert len(parse_csv(trials)) == 2
        assert agg.startswith("# squintsense")

    def test_simulate_deterministic_bytes(self, tmp_path):
        cfg_path = write_config(tmp_path, SCALED_LINES)
        outputs = []
        for name in ("a.csv", "b.csv"):
            out_path = str(tmp_path / name)
            assert run_cli(["simulate", "--config", cfg_path, "--output", out_path])[0] == 0
        a = (tmp_path / "a_aggregate.csv").read_text()
        b = (tmp_path / "b_aggregate.csv").read_text()
        assert a == b

    def test_output_dir_env_override(self, tmp_path, monkeypatch):
        override = tmp_path / "elsewhere"
        monkeypatch.setenv("SQUINTSENSE_OUTPUT_DIR", str(override))
        cfg_path = write_config(tmp_path, SCALED_LINES)
        code, _, _ = run_cli(
            ["simulate", "--config", cfg_path, "--output", str(tmp_path / "res.csv")]
        )
        assert code == 0
        assert (override / "res_aggregate.csv").exists()

    def test_detect_trace_schema(self, tmp_path):
        path = write_config(tmp_path, SCALED_LINES)
        code, out, _ = run_cli(["detect", "--config", path])
        assert code == 0
        rows = parse_csv(out)
        assert rows, "trace must be nonempty"
        assert set(rows[0]) == {
            "stage",
            "iteration",
            "selected_index",
            "correlation",
            "residual_norm",
        }
        assert all(float(r["residual_norm"]) >= 0 for r in rows)

    def test_power_schema(self, tmp_path):
        path = write_config(tmp_path, SCALED_LINES + "k_users = 2\n")
        code, out, _ = run_cli(["power", "--config", path])
        assert code == 0
        rows = parse_csv(out)
        sensing = [r for r in rows if r["kind"] == "sensing"]
        comm = [r for r in rows if r["kind"] == "comm"]
        stages = {r["stage"] for r in sensing}
        # N sensing rows per stage
        assert len(sensing) == 32 * len(stages)
        assert comm, "communication rows expected with k_users = 2"
        assert all(float(r["power_w"]) > 0 for r in comm)
        assert all(int(r["symbols"]) >= 1 for r in rows)

    def test_beampattern_peaks_at_grid_angles(self, tmp_path):
        from squintsense.beamforming import aas_azimuth_grid

        path = write_config(tmp_path, SCALED_LINES)
        code, out, _ = run_cli(
            [
                "beampattern",
                "--config",
                path,
                "--stage",
                "aas",
                "--theta-hat",
                "45",
                "--subcarriers",
                "0,15,31",
                "--points",
                "2001",
            ]
        )
        assert code == 0
        rows = parse_csv(out)
        cfg = load_config(path).system
        grid = aas_azimuth_grid(cfg)
        step = math.degrees(cfg.phi_max - cfg.phi_min) / 2000
        for n in (0, 15, 31):
            sub = [r for r in rows if int(r["subcarrier"]) == n]
            best = max(sub, key=lambda r: float(r["gain_abs"]))
            assert float(best["phi_deg"]) == pytest.approx(
                math.degrees(grid[n]), abs=2 * step
            )

    def test_beampattern_requires_theta_hat_for_aas(self, tmp_path):
        path = write_config(tmp_path, SCALED_LINES)
        code, _, err = run_cli(["beampattern", "--config", path, "--stage", "aas"])
        assert code == 1
        assert "theta-hat" in err
