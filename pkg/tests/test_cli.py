import hashlib
import json

import pytest

from emorf2.cli import default_config, load_config, main


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


class TestConfig:
    def test_defaults_match_scenario_parameters(self):
        cfg = default_config()
        s = cfg["scenario"]
        assert (s["zeta"], s["eta1"], s["eta2"]) == (1.0, 0.1, 1.75e-4)
        assert (s["sigma_sq"], s["horizon"]) == (10.0, 100)
        assert s["x0"] == [0.0, 1.0, 0.0, -1.0, -0.0524]
        f = cfg["filter"]
        assert (f["theta"], f["A"], f["B"], f["a"], f["b0"]) == (0.5, 10000.0, 1000.0, 1.0, 10000.0)
        assert f["convergence_threshold"] == 1e-4
        assert (f["ukf_alpha"], f["ukf_beta"], f["ukf_kappa"]) == (1.0, 2.0, 0.0)
        assert cfg["sweep"]["mc_runs"] == 100

    def test_partial_override(self, tmp_path):
        path = write_config(tmp_path, {"scenario": {"horizon": 7}})
        cfg = load_config(path)
        assert cfg["scenario"]["horizon"] == 7
        assert cfg["scenario"]["sigma_sq"] == 10.0

    def test_unknown_key_named_in_error(self, tmp_path):
        from emorf2.cli import ConfigError

        path = write_config(tmp_path, {"scenario": {"horzion": 7}})
        with pytest.raises(ConfigError, match="horzion"):
            load_config(path)


class TestPrintDefaults:
    def test_output_parses_and_round_trips(self, capsys):
        assert main(["print-defaults"]) == 0
        out = capsys.readouterr().out
        assert json.loads(out) == default_config()


class TestSimulateCommand:
    def test_writes_requested_rows(self, tmp_path, capsys):
        config = write_config(tmp_path, {"scenario": {"horizon": 9}})
        out = tmp_path / "record.txt"
        assert main(["simulate", "--config", config, "--out", str(out), "--seed", "3"]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 2 + 9  # two header lines plus one row per step

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        config = write_config(tmp_path, {"scenario": {"bogus": 1}})
        out = tmp_path / "x.txt"
        assert main(["simulate", "--config", config, "--out", str(out)]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_seed_repeat_gives_identical_bytes(self, tmp_path):
        config = write_config(tmp_path, {"scenario": {"horizon": 20, "lambda": 0.3}})
        out1, out2 = tmp_path / "a.txt", tmp_path / "b.txt"
        main(["simulate", "--config", config, "--out", str(out1), "--seed", "11"])
        main(["simulate", "--config", config, "--out", str(out2), "--seed", "11"])
        h1 = hashlib.sha256(out1.read_bytes()).hexdigest()
        h2 = hashlib.sha256(out2.read_bytes()).hexdigest()
        assert h1 == h2


class TestRunCommand:
    def test_clean_run_emits_json(self, tmp_path, capsys):
        config = write_config(tmp_path, {"scenario": {"horizon": 20}})
        assert main(["run", "--config", config, "--seed", "2"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["filter"] == "emorf2"
        assert payload["rmse"] > 0 and payload["wall_time_s"] > 0

    def test_unregistered_filter_exits_2(self, tmp_path, capsys):
        config = write_config(tmp_path, {"run": {"filter": "nope"}})
        assert main(["run", "--config", config]) == 2
        assert "nope" in capsys.readouterr().err


class TestSweepCommand:
    def test_custom_single_value(self, tmp_path, capsys):
        config = write_config(
            tmp_path,
            {
                "scenario": {"horizon": 15},
                "sweep": {"values": [0.2], "mc_runs": 2, "filters": ["plain_ukf"]},
            },
        )
        outdir = tmp_path / "out"
        assert main(["sweep", "--config", config, "--out", str(outdir), "--seed", "1"]) == 0
        for name in ("results.csv", "summary.json", "boxplot_rmse.txt", "boxplot_step_time.txt"):
            assert (outdir / name).exists()
        written = {p.name for p in outdir.iterdir()}
        assert written == {
            "results.csv", "summary.json", "boxplot_rmse.txt", "boxplot_step_time.txt"
        }

    def test_fig1_preset_enumerates_seven_lambdas(self, tmp_path):
        config = write_config(
            tmp_path,
            {"scenario": {"horizon": 5}, "sweep": {"mc_runs": 1, "filters": ["plain_ukf"]}},
        )
        outdir = tmp_path / "fig1"
        assert main(
            ["sweep", "--figure", "fig1", "--config", config, "--out", str(outdir), "--seed", "1"]
        ) == 0
        summary = json.loads((outdir / "summary.json").read_text())
        assert summary["values"] == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
        assert summary["variable"] == "lambda"

    def test_fig2_preset_enumerates_four_sensor_counts(self, tmp_path):
        config = write_config(
            tmp_path,
            {"scenario": {"horizon": 5}, "sweep": {"mc_runs": 1, "filters": ["plain_ukf"]}},
        )
        outdir = tmp_path / "fig2"
        assert main(
            ["sweep", "--figure", "fig2", "--config", config, "--out", str(outdir), "--seed", "1"]
        ) == 0
        summary = json.loads((outdir / "summary.json").read_text())
        assert summary["values"] == [5.0, 10.0, 15.0, 20.0]
        assert summary["variable"] == "m"

    def test_unknown_filter_exits_2(self, tmp_path, capsys):
        outdir = tmp_path / "out"
        code = main(["sweep", "--out", str(outdir), "--filters", "plain_ukf,bad_name"])
        assert code == 2
        assert "bad_name" in capsys.readouterr().err
