import os

import numpy as np
import pandas as pd
import pytest

from src import losses
from src.autodiff import GradientMap
from src.checkpoint import CheckpointManager
from src.config import parse_config
from src.errors import CheckpointError, NumericFault
from src.trainer import PlateauStopper, Trainer


def _config(out_dir, **train):
    settings = {"batch": 4, "iterations": 3, "log_every": 1, "checkpoint_every": 2, "seed": 5}
    settings.update(train)
    return parse_config(
        {
            "problem": {"tag": "heat-square", "d": 2},
            "net": {"layers": 2, "width": 4},
            "adam": {"lr": 1e-2},
            "train": settings,
            "output": {"dir": str(out_dir)},
        }
    )


def _constant_loss(surrogate, params, batch, workers=1, tapes=None):
    return 1.0, GradientMap(np.zeros_like(params.flat))


def test_zero_iterations_writes_initial_checkpoint(tmp_path):
    """Test a run with no iterations only stores the initial state."""
    result = Trainer(_config(tmp_path, iterations=0)).train()
    assert result.iterations == 0
    assert sorted(os.listdir(tmp_path)) == ["checkpoint-0.ckpt", "latest.ckpt"]


def test_training_logs_and_checkpoints(tmp_path):
    """Test losses are logged per iteration and checkpoints land on interval."""
    result = Trainer(_config(tmp_path)).train()
    assert result.iterations == 3
    assert [i for i, _ in result.losses] == [0, 1, 2]
    log = pd.read_csv(tmp_path / "loss.csv")
    assert list(log.columns) == ["iteration", "loss"]
    assert log["iteration"].tolist() == [0, 1, 2]
    assert np.all(np.isfinite(log["loss"]))
    for name in ("checkpoint-0.ckpt", "checkpoint-2.ckpt", "checkpoint-3.ckpt", "latest.ckpt"):
        assert (tmp_path / name).exists()
    assert CheckpointManager(str(tmp_path)).load().iteration == 3


def test_resume_matches_uninterrupted_run(tmp_path):
    """Test stopping and resuming gives the same parameters as one long run."""
    straight_dir, split_dir = tmp_path / "straight", tmp_path / "split"
    Trainer(_config(straight_dir, iterations=4)).train()
    Trainer(_config(split_dir, iterations=2)).train()
    Trainer(_config(split_dir, iterations=4)).train(resume=str(split_dir / "checkpoint-2.ckpt"))

    straight = CheckpointManager(str(straight_dir)).load()
    split = CheckpointManager(str(split_dir)).load()
    np.testing.assert_array_equal(split.params.flat, straight.params.flat)
    np.testing.assert_array_equal(split.adam.v, straight.adam.v)
    assert split.adam.step == straight.adam.step == 4
    assert split.loss_tail == straight.loss_tail
    pd.testing.assert_frame_equal(pd.read_csv(split_dir / "loss.csv"), pd.read_csv(straight_dir / "loss.csv"))


def test_resume_rejects_other_network(tmp_path):
    """Test a checkpoint for a different architecture cannot be resumed."""
    Trainer(_config(tmp_path, iterations=0)).train()
    config = _config(tmp_path)
    config = parse_config({**config.model_dump(), "net": {**config.net.model_dump(), "width": 6}})
    with pytest.raises(CheckpointError):
        Trainer(config).train(resume=str(tmp_path / "checkpoint-0.ckpt"))


def test_numeric_fault_reports_iteration(tmp_path, mocker):
    """Test a fault inside the loss is re-raised with its iteration."""
    mocker.patch("src.trainer.batch_loss", side_effect=NumericFault("non-finite value"))
    with pytest.raises(NumericFault) as excinfo:
        Trainer(_config(tmp_path)).train()
    assert excinfo.value.iteration == 0
    assert "at iteration 0" in str(excinfo.value)


def test_plateau_stops_training(tmp_path, mocker):
    """Test a flat loss stops the run once patience runs out."""
    mocker.patch("src.trainer.batch_loss", side_effect=_constant_loss)
    result = Trainer(_config(tmp_path, iterations=10, patience=2)).train()
    assert result.stopped_early
    assert result.iterations == 3
    assert CheckpointManager(str(tmp_path)).load().iteration == 3


def test_plateau_stopper():
    """Test the stopper counts windows without improvement."""
    stopper = PlateauStopper(patience=2, min_delta=0.1)
    assert not stopper.update(1.0)
    assert not stopper.update(0.95)
    assert stopper.update(0.92)
    assert not PlateauStopper().update(5.0)


def test_plateau_state_survives_resume(tmp_path, mocker):
    """Test a resumed run stops at the same iteration as an uninterrupted one."""
    mocker.patch("src.trainer.batch_loss", side_effect=_constant_loss)
    straight = Trainer(_config(tmp_path / "straight", iterations=10, patience=2)).train()
    Trainer(_config(tmp_path / "split", iterations=2, patience=2)).train()
    checkpoint = CheckpointManager(str(tmp_path / "split")).load(str(tmp_path / "split" / "checkpoint-2.ckpt"))
    assert checkpoint.plateau.best == 1.0
    assert checkpoint.plateau.stale == 1
    resumed = Trainer(_config(tmp_path / "split", iterations=10, patience=2)).train(
        resume=str(tmp_path / "split" / "checkpoint-2.ckpt")
    )
    assert straight.iterations == resumed.iterations == 3
    assert resumed.stopped_early


def test_open_log_window_survives_resume(tmp_path):
    """Test a checkpoint taken mid log window resumes the window's losses."""
    straight_dir, split_dir = tmp_path / "straight", tmp_path / "split"
    Trainer(_config(straight_dir, iterations=6, log_every=4, checkpoint_every=3, patience=5)).train()
    Trainer(_config(split_dir, iterations=3, log_every=4, checkpoint_every=3, patience=5)).train()
    assert len(CheckpointManager(str(split_dir)).load().plateau.window) == 3
    Trainer(_config(split_dir, iterations=6, log_every=4, checkpoint_every=3, patience=5)).train(
        resume=str(split_dir / "checkpoint-3.ckpt")
    )
    straight = CheckpointManager(str(straight_dir)).load()
    split = CheckpointManager(str(split_dir)).load()
    assert split.plateau == straight.plateau
    np.testing.assert_array_equal(split.params.flat, straight.params.flat)


def test_loss_log_complete_after_fault_and_resume(tmp_path, mocker):
    """Test losses held back mid window are written before a fault and a resume fills the rest."""
    calls = []

    def faulty(surrogate, params, batch, workers=1, tapes=None):
        calls.append(1)
        if len(calls) == 5:
            raise NumericFault("non-finite value")
        return losses.batch_loss(surrogate, params, batch, workers=workers, tapes=tapes)

    straight_dir, split_dir = tmp_path / "straight", tmp_path / "split"
    Trainer(_config(straight_dir, iterations=6, log_every=5, checkpoint_every=3)).train()

    patch = mocker.patch("src.trainer.batch_loss", side_effect=faulty)
    with pytest.raises(NumericFault) as excinfo:
        Trainer(_config(split_dir, iterations=6, log_every=5, checkpoint_every=3)).train()
    assert excinfo.value.iteration == 4
    assert pd.read_csv(split_dir / "loss.csv")["iteration"].tolist() == [0, 1, 2, 3]

    patch.side_effect = losses.batch_loss
    Trainer(_config(split_dir, iterations=6, log_every=5, checkpoint_every=3)).train(
        resume=str(split_dir / "checkpoint-3.ckpt")
    )
    split_log = pd.read_csv(split_dir / "loss.csv")
    assert split_log["iteration"].tolist() == [0, 1, 2, 3, 4, 5]
    pd.testing.assert_frame_equal(split_log, pd.read_csv(straight_dir / "loss.csv"))


def test_thread_count_does_not_change_training(tmp_path):
    """Test the same config trains to identical parameters on 1 and 4 threads."""
    Trainer(_config(tmp_path / "one", batch=20), threads=1).train()
    Trainer(_config(tmp_path / "four", batch=20), threads=4).train()
    one = CheckpointManager(str(tmp_path / "one")).load()
    four = CheckpointManager(str(tmp_path / "four")).load()
    np.testing.assert_array_equal(one.params.flat, four.params.flat)
    np.testing.assert_array_equal(one.adam.v, four.adam.v)
    pd.testing.assert_frame_equal(pd.read_csv(tmp_path / "one" / "loss.csv"), pd.read_csv(tmp_path / "four" / "loss.csv"))
