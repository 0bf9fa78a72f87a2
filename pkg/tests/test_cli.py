import json

import numpy as np
import pytest

from mofcast.cli import main
from mofcast.data import default_synth_split_config, load_tracks


@pytest.fixture
def synth_file(tmp_path):
    path = tmp_path / "tracks.csv"
    code = main(
        ["synth", "--kind", "constant_velocity", "--n", "8", "--seed", "7",
         "--frames", "95", "--out", str(path)]
    )
    assert code == 0
    return path


@pytest.fixture
def splits_file(tmp_path):
    path = tmp_path / "splits.json"
    default_synth_split_config().to_file(path)
    return path


class TestExitCodes:
    def test_usage_error_is_exit_1(self, capsys):
        assert main(["synth", "--kind", "warp-drive"]) == 1

    def test_unknown_subcommand_is_exit_1(self):
        assert main(["frobnicate"]) == 1

    def test_data_error_is_exit_2(self, tmp_path, capsys):
        missing = tmp_path / "nope.csv"
        assert main(["prepare", "--tracks", str(missing), "--out", str(tmp_path / "o")]) == 2
        assert "prepare" in capsys.readouterr().err

    def test_validation_error_is_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("video_id,city,weather,time_of_day,frame,track_id,cx,cy,w,h\nv,,,,0,1,1,1,0,1\n")
        assert main(["prepare", "--tracks", str(bad), "--out", str(tmp_path / "o")]) == 2

    def test_help_is_exit_0(self):
        assert main(["--help"]) == 0


class TestSynth:
    def test_byte_identical_across_runs(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["synth", "--kind", "constant_velocity", "--n", "100", "--seed", "7"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_output_parses(self, synth_file):
        tracks = load_tracks(synth_file)
        assert len(tracks) == 8
        assert all(len(t) == 95 for t in tracks)


class TestPrepare:
    def test_stats_emitted(self, synth_file, splits_file, tmp_path, capsys):
        out = tmp_path / "prep"
        code = main(
            ["prepare", "--tracks", str(synth_file), "--splits", str(splits_file),
             "--stride", "3", "--out", str(out)]
        )
        assert code == 0
        stats = json.loads((out / "prepare_stats.json").read_text())
        assert stats["tracks_in"] == 8
        assert stats["windows"] == sum(
            stats[f"windows_{side}"] for side in ("train", "val", "test")
        )
        assert (out / "filtered_tracks.csv").exists()


class TestClipFilter:
    def test_clips_csv(self, tmp_path, capsys):
        flow = tmp_path / "flow.csv"
        rows = ["video_id,frame,mean_flow_magnitude"]
        rows += [f"v0,{f},1.0" for f in range(1200)]
        rows += [f"v1,{f},2.0" for f in range(700)]
        flow.write_text("\n".join(rows) + "\n")
        out = tmp_path / "clips"
        assert main(["clip-filter", "--flow-magnitudes", str(flow), "--out", str(out)]) == 0
        lines = (out / "clips.csv").read_text().splitlines()
        assert lines[0] == "video_id,start_frame,end_frame"
        assert lines[1:] == ["v0,0,599", "v0,600,1199"]


class TestEvalAndForecast:
    def test_eval_cv_cs_zero_ade(self, synth_file, tmp_path, capsys):
        out = tmp_path / "eval"
        code = main(
            ["eval", "--model", "cv_cs", "--tracks", str(synth_file), "--stride", "5",
             "--out", str(out)]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        assert "ADE 0.00" in stdout
        summary = (out / "summary.csv").read_text().splitlines()
        assert summary[1].startswith("cv_cs,")

    def test_forecast_round_trips_through_loader(self, synth_file, tmp_path):
        out = tmp_path / "fc"
        code = main(
            ["forecast", "--model", "cv_cs", "--tracks", str(synth_file), "--stride", "10",
             "--out", str(out)]
        )
        assert code == 0
        tracks = load_tracks(out / "forecasts.csv")
        assert tracks and all(len(t) == 60 for t in tracks)

    def test_eval_lkf_requires_params(self, synth_file, tmp_path):
        assert main(
            ["eval", "--model", "lkf", "--tracks", str(synth_file), "--out", str(tmp_path / "o")]
        ) == 2

    def test_eval_encdec_requires_checkpoint(self, synth_file, tmp_path):
        assert main(
            ["eval", "--model", "encdec", "--tracks", str(synth_file), "--out", str(tmp_path / "o")]
        ) == 2


class TestTrainAndCrossEval:
    def test_train_then_eval_then_cross_eval(self, synth_file, splits_file, tmp_path, capsys):
        out = tmp_path / "runs"
        code = main(
            ["train", "--tracks", str(synth_file), "--splits", str(splits_file), "--fold", "0",
             "--hidden", "8", "--epochs", "1", "--batch", "32", "--seed", "5", "--stride", "5",
             "--out", str(out)]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        ckpts = list(out.glob("run-*/checkpoint.mofc"))
        assert len(ckpts) == 1
        assert "checkpoint" in stdout

        code = main(
            ["eval", "--model", "encdec", "--checkpoint", str(ckpts[0]), "--tracks",
             str(synth_file), "--stride", "10", "--out", str(tmp_path / "eval2")]
        )
        assert code == 0

        code = main(
            ["cross-eval", "--checkpoint", str(ckpts[0]), "--tracks", str(synth_file),
             "--stride", "10", "--out", str(tmp_path / "xe")]
        )
        assert code == 0
        assert "cross-eval" in capsys.readouterr().out

    def test_tune_lkf(self, synth_file, splits_file, tmp_path, capsys):
        out = tmp_path / "runs"
        code = main(
            ["tune-lkf", "--tracks", str(synth_file), "--splits", str(splits_file),
             "--fold", "0", "--stride", "10", "--out", str(out)]
        )
        assert code == 0
        assert list(out.glob("run-*/lkf_params.json"))


class TestGradcheck:
    def test_passes_and_prints_error(self, capsys):
        code = main(["gradcheck", "--hidden", "16", "--seed", "1", "--samples", "1", "--coords", "10"])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "max relative error" in stdout
        assert "passed" in stdout
