import numpy as np
import pytest

from detector.constants import AblationEnum
from tensor.tensor_core import Tensor, current_tape
from training import train_loop
from training.train_checkpoint import load_checkpoint
from training.train_config import config_hash, load_run_config
from training.train_loop import Trainer, TrainingDivergedError, evaluate, make_run_dir, predict_records, train


def _parameters(model):
    return {name: np.array(param.data, copy=True) for name, param in model.named_parameters()}


def test_zero_learning_rate_keeps_every_parameter(toy_manifest, tiny_run_config):
    cfg = tiny_run_config.copy(update={'optimizer': tiny_run_config.optimizer.copy(update={'lr': 0.0})})
    trainer = Trainer(cfg)
    before = _parameters(trainer.model)
    trainer.fit(toy_manifest)
    after = _parameters(trainer.model)
    for name, array in before.items():
        np.testing.assert_array_equal(after[name], array)
    assert len(trainer.loss_trajectory) == 3


def test_training_is_deterministic(toy_manifest, tiny_run_config):
    first = Trainer(tiny_run_config)
    second = Trainer(tiny_run_config)
    first.fit(toy_manifest)
    second.fit(toy_manifest)
    assert first.loss_trajectory == second.loss_trajectory
    for name, array in _parameters(first.model).items():
        np.testing.assert_array_equal(_parameters(second.model)[name], array)


def test_non_finite_loss_stops_training(toy_manifest, tiny_run_config, monkeypatch):
    monkeypatch.setattr(train_loop, 'bce_loss', lambda logits, labels: Tensor(np.array(np.nan)))
    with pytest.raises(TrainingDivergedError) as error:
        Trainer(tiny_run_config).fit(toy_manifest)
    assert (error.value.epoch, error.value.step) == (0, 0)
    assert len(current_tape()) == 0


def test_run_directory_holds_config_metrics_and_checkpoints(tmp_path, toy_manifest, tiny_run_config):
    run_dir = make_run_dir(tiny_run_config, tmp_path / 'runs')
    assert run_dir.name.endswith(config_hash(tiny_run_config))
    assert config_hash(load_run_config(run_dir / 'config.toml')) == config_hash(tiny_run_config)
    result = train(toy_manifest, tiny_run_config, run_dir=run_dir)
    assert len(result.history) == 1
    assert result.history[0].val_acc is not None
    assert (run_dir / 'checkpoints' / 'epoch_000.ckpt').exists()
    assert result.best_checkpoint == run_dir / 'checkpoints' / 'best.ckpt'
    meta = load_checkpoint(result.best_checkpoint).meta
    assert meta['epoch'] == 0
    assert meta['sampling_mode'] == 'grid'
    assert (run_dir / 'metrics.csv').read_text().splitlines()[0] == 'epoch,loss,acc,val_acc,val_ap,seconds'


def test_evaluation_reports_every_record(toy_manifest, tiny_run_config):
    trainer = Trainer(tiny_run_config)
    report = evaluate(trainer.model, toy_manifest, tiny_run_config)
    assert report.n == 12
    assert [item.source for item in report.sources] == ['toy']
    assert 0.0 <= report.pooled_acc <= 1.0
    assert trainer.model.training


def test_predict_records_outputs(toy_manifest, tiny_run_config):
    cfg = tiny_run_config.copy(update={'ablation': AblationEnum.no_high})
    trainer = Trainer(cfg)
    outputs = predict_records(trainer.model, toy_manifest.records[:5], cfg)
    assert outputs.probs.shape == (5,)
    assert outputs.features.shape == (5, 32)
    assert outputs.energy_high is None
    assert outputs.energy_low.shape == (5, 8)
    again = predict_records(trainer.model, toy_manifest.records[:5], cfg)
    np.testing.assert_array_equal(again.logits, outputs.logits)
