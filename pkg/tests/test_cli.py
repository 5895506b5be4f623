"""End-to-end tests of the command-line interface and its exit codes."""

import json

import numpy as np
import pytest

from mrimotion.cli import dispatch
from mrimotion.motion import MotionTrajectory, RigidMotion, TrajectorySegment, save_trajectory
from mrimotion.phantom import generate, standard_spec
from mrimotion.volume import load_volume, save_volume


@pytest.fixture()
def phantom_file(tmp_path):
    v = generate(standard_spec(), (16, 16, 16), name="head")
    save_volume(v, tmp_path / "head")
    return tmp_path / "head"


class TestDispatchBasics:
    def test_unknown_command_is_usage_error(self, capsys):
        assert dispatch(["transmogrify"]) == 1
        assert "transmogrify" in capsys.readouterr().err

    def test_no_command_is_usage_error(self):
        assert dispatch([]) == 1

    def test_version_exits_cleanly(self):
        assert dispatch(["--version"]) == 0

    def test_help_exits_cleanly(self):
        assert dispatch(["--help"]) == 0
        assert dispatch(["corrupt", "--help"]) == 0

    def test_missing_required_flag_is_usage_error(self, capsys):
        assert dispatch(["corrupt"]) == 1
        assert "required" in capsys.readouterr().err


class TestPhantomCommand:
    def test_standard_phantom(self, tmp_path):
        out = tmp_path / "out"
        code = dispatch(["phantom", "--standard", "--dims", "16,16,16",
                         "--out-dir", str(out)])
        assert code == 0
        v = load_volume(out / "phantom_standard")
        assert v.dims == (16, 16, 16)
        assert (out / "phantom_standard.spec.json").exists()
        assert (out / "run_manifest.json").exists()

    def test_random_phantoms_deterministic(self, tmp_path):
        for sub in ("a", "b"):
            code = dispatch(["phantom", "--count", "2", "--seed", "12",
                             "--dims", "16,16,16", "--out-dir", str(tmp_path / sub)])
            assert code == 0
        for name in ("phantom000", "phantom001"):
            assert (tmp_path / "a" / f"{name}.raw").read_bytes() == \
                   (tmp_path / "b" / f"{name}.raw").read_bytes()


class TestCorruptCommand:
    def test_identity_trajectory_round_trips(self, tmp_path, phantom_file):
        still = MotionTrajectory((TrajectorySegment(0, RigidMotion()),), n_pe=16)
        save_trajectory(still, tmp_path / "still.traj.json", seed=0)
        out = tmp_path / "out"
        code = dispatch(["corrupt", "--input", str(phantom_file),
                         "--trajectory", str(tmp_path / "still.traj.json"),
                         "--out-dir", str(out)])
        assert code == 0
        original = load_volume(phantom_file)
        corrupted = load_volume(out / "head_corrupted")
        assert np.abs(corrupted.data - original.data).max() <= 1e-10

    def test_random_trajectory_written_and_deterministic(self, tmp_path, phantom_file):
        for sub in ("a", "b"):
            code = dispatch(["corrupt", "--input", str(phantom_file), "--seed", "3",
                             "--out-dir", str(tmp_path / sub)])
            assert code == 0
        assert (tmp_path / "a" / "head.traj.json").exists()
        assert (tmp_path / "a" / "head_corrupted.raw").read_bytes() == \
               (tmp_path / "b" / "head_corrupted.raw").read_bytes()

    def test_missing_input_names_path(self, tmp_path, capsys):
        code = dispatch(["corrupt", "--input", str(tmp_path / "nowhere"),
                         "--out-dir", str(tmp_path / "out")])
        assert code == 2
        assert str(tmp_path / "nowhere") in capsys.readouterr().err


class TestDatasetTrainEvalCommands:
    def test_dataset_counts_printed(self, tmp_path, capsys):
        code = dispatch(["dataset", "--train-phantoms", "1", "--test-phantoms", "1",
                         "--motions", "1", "--dims", "16,16,16", "--seed", "2",
                         "--out-dir", str(tmp_path / "ds")])
        assert code == 0
        assert "train: 1 samples, test: 1 samples" in capsys.readouterr().out
        assert (tmp_path / "ds" / "train" / "dataset.json").exists()
        assert (tmp_path / "ds" / "test" / "dataset.json").exists()

    def test_train_missing_dataset_names_path(self, tmp_path, capsys):
        code = dispatch(["train", "--dataset", str(tmp_path / "missing"),
                         "--out-dir", str(tmp_path / "run")])
        assert code == 2
        assert str(tmp_path / "missing" / "train") in capsys.readouterr().err

    def test_train_and_correct_round_trip(self, tmp_path, phantom_file):
        ds = tmp_path / "ds"
        assert dispatch(["dataset", "--train-phantoms", "1", "--test-phantoms", "1",
                         "--motions", "1", "--dims", "16,16,16", "--seed", "2",
                         "--out-dir", str(ds)]) == 0
        run = tmp_path / "run"
        assert dispatch(["train", "--dataset", str(ds), "--iterations", "3",
                         "--batch-size", "2", "--levels", "1", "--channels", "2",
                         "--seed", "4", "--out-dir", str(run)]) == 0
        assert (run / "weights.json").exists()
        assert (run / "loss.csv").exists()
        out = tmp_path / "corrected"
        assert dispatch(["correct", "--weights", str(run / "weights"),
                         "--input", str(phantom_file), "--slice", "8",
                         "--out-dir", str(out)]) == 0
        corrected = load_volume(out / "head_corrected")
        assert corrected.dims == (16, 16, 16)
        assert (out / "head_corrected_s008.pgm").exists()

    def test_diverging_train_is_numerical_error(self, tmp_path, capsys):
        ds = tmp_path / "ds"
        assert dispatch(["dataset", "--train-phantoms", "1", "--test-phantoms", "1",
                         "--motions", "1", "--dims", "16,16,16", "--seed", "2",
                         "--out-dir", str(ds)]) == 0
        # default three-level net: enough conv layers that a huge step
        # overflows float64 within an iteration or two
        code = dispatch(["train", "--dataset", str(ds), "--iterations", "50",
                         "--batch-size", "2", "--learning-rate", "1e28",
                         "--seed", "4", "--out-dir", str(tmp_path / "run")])
        assert code == 3
        assert "numerical error" in capsys.readouterr().err

    def test_correct_missing_weights_names_path(self, tmp_path, phantom_file, capsys):
        code = dispatch(["correct", "--weights", str(tmp_path / "w"),
                         "--input", str(phantom_file), "--out-dir", str(tmp_path / "o")])
        assert code == 2
        assert str(tmp_path / "w") in capsys.readouterr().err

    def test_eval_missing_pristine_names_path(self, tmp_path, capsys):
        ds = tmp_path / "ds"
        assert dispatch(["dataset", "--train-phantoms", "1", "--test-phantoms", "1",
                         "--motions", "1", "--dims", "16,16,16", "--seed", "2",
                         "--out-dir", str(ds)]) == 0
        code = dispatch(["eval", "--dataset", str(ds), "--weights", str(ds / "w"),
                         "--pristine", str(ds / "p"), "--out-dir", str(tmp_path / "o")])
        assert code == 2
        err = capsys.readouterr().err
        assert str(ds / "w") in err or str(ds / "p") in err


class TestRunManifest:
    def test_resolved_config_echoed(self, tmp_path):
        out = tmp_path / "out"
        assert dispatch(["phantom", "--standard", "--dims", "16,16,16",
                         "--seed", "7", "--out-dir", str(out)]) == 0
        doc = json.loads((out / "run_manifest.json").read_text())
        assert doc["command"] == "phantom"
        assert doc["resolved_config"]["seed"] == 7
        assert doc["resolved_config"]["dims"] == [16, 16, 16]
        assert doc["version"]

    def test_config_file_beats_default_and_flag_beats_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 5, "count": 1, "dims": [16, 16, 16]}))
        out1 = tmp_path / "one"
        assert dispatch(["phantom", "--config", str(cfg), "--out-dir", str(out1)]) == 0
        doc1 = json.loads((out1 / "run_manifest.json").read_text())
        assert doc1["resolved_config"]["seed"] == 5
        out2 = tmp_path / "two"
        assert dispatch(["phantom", "--config", str(cfg), "--seed", "9",
                         "--out-dir", str(out2)]) == 0
        doc2 = json.loads((out2 / "run_manifest.json").read_text())
        assert doc2["resolved_config"]["seed"] == 9
