import json

import pytest

from fedspeech.cli import main


def run(args, capsys=None):
    code = main(args)
    return code


class TestAnalyze:
    def test_writes_reports_and_exits_zero(self, tmp_path, capsys):
        out = tmp_path / "r"
        assert run(["analyze", "--arch", "base", "--duration", "5.5",
                    "--out", str(out)]) == 0
        payload = json.loads((out / "analyze.json").read_text())
        assert payload["grand_total"]["params"] == pytest.approx(94.79e6, rel=0.01)
        assert (out / "analyze.csv").read_text().startswith("layer_id,")

    def test_byte_identical_reruns(self, tmp_path):
        out = tmp_path / "r"
        run(["analyze", "--arch", "base", "--duration", "5.5", "--out", str(out)])
        first = (out / "analyze.json").read_bytes(), (out / "analyze.csv").read_bytes()
        run(["analyze", "--arch", "base", "--duration", "5.5", "--out", str(out)])
        second = (out / "analyze.json").read_bytes(), (out / "analyze.csv").read_bytes()
        assert first == second

    def test_invalid_duration_exits_2(self, tmp_path, capsys):
        assert run(["analyze", "--arch", "base", "--duration", "0",
                    "--out", str(tmp_path)]) == 2

    def test_unknown_config_key_exits_2(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("flx: {}\n")
        assert run(["analyze", "--config", str(cfg), "--out", str(tmp_path)]) == 2


class TestMemory:
    def test_peak_and_series(self, tmp_path):
        out = tmp_path / "r"
        assert run(["memory", "--arch", "base", "--duration", "5.5", "--batch", "4",
                    "--out", str(out)]) == 0
        payload = json.loads((out / "memory.json").read_text())
        assert payload["peak_bytes"] == pytest.approx(2.54e9, rel=1e-6)
        series = [row["cumulative_bytes"] for row in payload["per_layer"]]
        assert series == sorted(series)

    def test_second_reference_point(self, tmp_path):
        out = tmp_path / "r"
        run(["memory", "--arch", "base", "--duration", "12", "--batch", "8",
             "--out", str(out)])
        payload = json.loads((out / "memory.json").read_text())
        assert payload["peak_bytes"] == pytest.approx(9.89e9, rel=0.15)


class TestPredictTime:
    def test_anchor_round_trip(self, tmp_path):
        out = tmp_path / "r"
        assert run(["predict-time", "--device", "a40", "--arch", "base",
                    "--duration", "5.5", "--batch", "4", "--out", str(out)]) == 0
        payload = json.loads((out / "predict_time.json").read_text())
        assert payload["seconds_per_batch"] == pytest.approx(0.27, rel=1e-9)
        assert payload["fit"] == "fits"

    def test_missing_anchor_exits_2(self, tmp_path):
        assert run(["predict-time", "--device", "rpi", "--arch", "large",
                    "--duration", "5.5", "--out", str(tmp_path)]) == 2

    def test_oom_with_flag_exits_4(self, tmp_path):
        assert run(["predict-time", "--device", "nx", "--arch", "base",
                    "--duration", "5.5", "--batch", "16", "--fail-on-oom",
                    "--out", str(tmp_path)]) == 4


class TestFlPlan:
    def test_reference_plan(self, tmp_path):
        out = tmp_path / "r"
        assert run(["fl-plan", "--clients", "10", "--rounds", "150",
                    "--device", "a40", "--batch", "4", "--out", str(out)]) == 0
        payload = json.loads((out / "fl_plan.json").read_text())
        assert payload["total_hours"] == pytest.approx(55.5, rel=0.02)
        assert payload["communication_bytes"] == pytest.approx(1.1375e12, rel=0.01)
        assert (out / "fl_partition.json").exists()
        assert (out / "fl_schedule.json").exists()

    def test_with_manifest(self, tmp_path, corpus_manifest_path):
        out = tmp_path / "r"
        assert run(["fl-plan", "--manifest", str(corpus_manifest_path),
                    "--clients", "10", "--rounds", "3", "--device", "a40",
                    "--batch", "4", "--seed", "5", "--out", str(out)]) == 0
        partition = json.loads((out / "fl_partition.json").read_text())
        counts = [c["n_utterances"] for c in partition["clients"]]
        assert sum(counts) == 195_000

    def test_malformed_manifest_exits_3(self, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("utterance_id\tspeaker_id\tduration_s\nu1\ts1\t-4\n")
        assert run(["fl-plan", "--manifest", str(bad), "--clients", "1",
                    "--rounds", "1", "--device", "a40", "--out", str(tmp_path)]) == 3

    def test_missing_manifest_exits_3(self, tmp_path):
        assert run(["fl-plan", "--manifest", str(tmp_path / "nope.tsv"),
                    "--clients", "1", "--rounds", "1", "--device", "a40",
                    "--out", str(tmp_path)]) == 3


class TestFlSim:
    def test_single_client_converges(self, tmp_path):
        out = tmp_path / "r"
        assert run(["fl-sim", "--agg", "fedavg", "--clients", "1", "--rounds", "60",
                    "--seed", "2", "--out", str(out)]) == 0
        payload = json.loads((out / "fl_sim.json").read_text())
        assert payload["final_distance_to_optimum"] < 1e-6

    def test_loss_aggregation_and_csv(self, tmp_path):
        out = tmp_path / "r"
        assert run(["fl-sim", "--agg", "loss", "--alpha", "1.0", "--clients", "10",
                    "--per-round", "4", "--rounds", "20", "--seed", "3",
                    "--out", str(out)]) == 0
        lines = (out / "fl_sim.csv").read_text().strip().splitlines()
        assert lines[0].startswith("round,")
        assert len(lines) == 21

    def test_deterministic_across_runs(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        args = ["fl-sim", "--agg", "fedavg", "--clients", "8", "--rounds", "15",
                "--seed", "11"]
        run(args + ["--out", str(out_a)])
        run(args + ["--out", str(out_b)])
        assert (out_a / "fl_sim.csv").read_bytes() == (out_b / "fl_sim.csv").read_bytes()


class TestForecast:
    def test_nx_parity_window(self, tmp_path):
        out = tmp_path / "r"
        assert run(["forecast", "--device", "nx", "--reference", "a40",
                    "--batch", "4", "--precision", "fp32", "--doubling-months", "18",
                    "--out", str(out)]) == 0
        payload = json.loads((out / "forecast.json").read_text())
        assert payload["headline"] == "b4-fp32"
        assert 2026 <= payload["combos"]["b4-fp32"]["parity_year"] <= 2028
        # every anchored combination is reported
        assert set(payload["combos"]) == {"b1-fp32", "b1-mixed", "b4-fp32", "b4-mixed"}

    def test_unknown_device_exits_2(self, tmp_path):
        assert run(["forecast", "--device", "abacus", "--out", str(tmp_path)]) == 2


class TestParser:
    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for cmd in ("analyze", "memory", "predict-time", "fl-plan", "fl-sim",
                    "forecast", "validate"):
            assert cmd in text
