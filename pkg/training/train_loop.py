import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from analysis.csv_utils import write_rows
from detector.cascade import bce_loss, to_predictions
from detector.s2f_net import S2FNet, build_model
from detector.smash_reconstruct import sampling_mode, stack_views
from imaging.image_degrade import DegradeSpec
from tensor.tensor_core import backward, no_grad, reset_tape
from tensor.tensor_optim import Adam
from training.train_config import RunConfig, config_hash, dump_run_config
from training.train_checkpoint import save_checkpoint
from training.train_dataset import DatasetManifest, ImageCache, ManifestRecord, epoch_order, prepare_views
from training.train_metrics import EvalReport, accuracy, average_precision, build_eval_report

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """
    Raised when the training loss becomes NaN or infinite.
    """
    def __init__(self, epoch: int, step: int, loss: float) -> None:
        self.epoch = epoch
        self.step = step
        self.loss = loss
        super().__init__(f'Training diverged at epoch {epoch} step {step}: loss={loss}')


class EpochStats(BaseModel):
    epoch: int
    loss: float
    acc: float
    val_acc: Optional[float] = None
    val_ap: Optional[float] = None
    seconds: float = 0.0


class TrainResult(NamedTuple):
    model: S2FNet
    history: List[EpochStats]
    run_dir: Optional[Path]
    best_checkpoint: Optional[Path]


class ModelOutputs(NamedTuple):
    """
    Eval-mode outputs per image.
    """
    probs: np.ndarray
    logits: np.ndarray
    features: np.ndarray
    energy_high: Optional[np.ndarray]
    energy_low: Optional[np.ndarray]


def make_run_dir(cfg: RunConfig, root: Optional[Union[str, Path]] = None) -> Path:
    """
    Creates `<root>/<UTC timestamp>-<config hash>/` holding config.toml.
    """
    stamp = datetime.now(timezone.utc).strftime('%Y%m%dT%H%M%S%fZ')
    run_dir = Path(root or cfg.train.runs_dir) / f'{stamp}-{config_hash(cfg)}'
    run_dir.mkdir(parents=True, exist_ok=False)
    dump_run_config(cfg, run_dir / 'config.toml')
    return run_dir


def run_sampling_mode(cfg: RunConfig) -> str:
    # Without size normalization the mode is decided per image
    if not cfg.preprocess.normalize:
        return 'per_image'
    return sampling_mode(cfg.preprocess.crop_size, cfg.preprocess.crop_size, cfg.smash).value


def _batches(items: Sequence, size: int) -> List[Sequence]:
    return [items[start:start + size] for start in range(0, len(items), size)]


def predict_records(model: S2FNet, records: Sequence[ManifestRecord], cfg: RunConfig,
                    degrade: Optional[DegradeSpec] = None, cache: Optional[ImageCache] = None) -> ModelOutputs:
    """
    Eval-mode forward over records in manifest order.
    """
    was_training = model.training
    model.eval()
    logits, features, high, low = [], [], [], []
    try:
        for batch in _batches(list(records), cfg.optimizer.batch_size):
            rich, poor = stack_views(prepare_views(batch, cfg, train=False, degrade=degrade, cache=cache))
            with no_grad():
                logits.append(np.array(model(rich, poor).data, dtype=np.float64).reshape(-1))
            features.append(model.last_features.astype(np.float64))
            energies = model.last_energies
            high.append(energies['high'])
            low.append(energies['low'])
    finally:
        model.train(was_training)
    logits = np.concatenate(logits)
    probs = np.array([prediction.prob for prediction in to_predictions(logits)])
    return ModelOutputs(probs=probs, logits=logits, features=np.concatenate(features),
                        energy_high=_concat_optional(high), energy_low=_concat_optional(low))


def _concat_optional(parts: List[Optional[np.ndarray]]) -> Optional[np.ndarray]:
    # Bypassed branches report no energy
    if any(part is None for part in parts):
        return None
    return np.concatenate(parts).astype(np.float64)


def evaluate(model: S2FNet, manifest: DatasetManifest, cfg: RunConfig, degrade: Optional[DegradeSpec] = None,
             variant: str = 'clean', cache: Optional[ImageCache] = None) -> EvalReport:
    outputs = predict_records(model, manifest.records, cfg, degrade=degrade, cache=cache)
    degradation = {'kind': degrade.kind.value, 'value': degrade.value} if degrade else None
    report = build_eval_report(outputs.probs, manifest.labels, [record.source for record in manifest.records],
                               variant=variant, degradation=degradation)
    logger.info('eval variant=%s n=%d mean_acc=%.4f pooled_acc=%.4f mean_ap=%s', variant, report.n,
                report.mean_acc, report.pooled_acc,
                'nan' if report.mean_ap is None else f'{report.mean_ap:.4f}')
    return report


class Trainer:
    """
    Minibatch training: smash -> SRM -> LFA -> discriminator -> BCE -> Adam.
    """
    def __init__(self, cfg: RunConfig, model: Optional[S2FNet] = None, run_dir: Optional[Path] = None) -> None:
        self.cfg = cfg
        self.model = model if model is not None else build_model(cfg.model_config())
        self.optimizer = Adam(self.model.parameters(), lr=cfg.optimizer.lr, beta1=cfg.optimizer.beta1,
                              beta2=cfg.optimizer.beta2, eps=cfg.optimizer.eps)
        self.run_dir = run_dir
        self.cache = ImageCache() if cfg.train.cache_images else None
        self.history: List[EpochStats] = []
        self.loss_trajectory: List[float] = []

    def train_step(self, records: Sequence[ManifestRecord], slots: Sequence[int], epoch: int,
                   step: int) -> Dict[str, np.ndarray]:
        views = prepare_views(records, self.cfg, train=True, epoch=epoch, indices=slots, cache=self.cache)
        rich, poor = stack_views(views)
        labels = np.array([int(record.label) for record in records])
        self.model.train()
        self.optimizer.zero_grad()
        try:
            logits = self.model(rich, poor)
            loss = bce_loss(logits, labels)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise TrainingDivergedError(epoch, step, loss_value)
            backward(loss)
        finally:
            # Failed steps leave no graph behind
            reset_tape()
        self.optimizer.step()
        self.loss_trajectory.append(loss_value)
        logger.debug('epoch=%d step=%d loss=%.6f', epoch, step, loss_value)
        return {'loss': np.float64(loss_value), 'labels': labels,
                'predictions': (np.asarray(logits.data).reshape(-1) >= 0).astype(int)}

    def run_epoch(self, manifest: DatasetManifest, epoch: int) -> EpochStats:
        started = time.perf_counter()
        order = epoch_order(manifest, self.cfg.seed, epoch, balanced=self.cfg.train.balanced)
        losses, weights, predictions, labels = [], [], [], []
        slots = list(range(len(order)))
        for step, (batch, batch_slots) in enumerate(zip(_batches(order, self.cfg.optimizer.batch_size),
                                                        _batches(slots, self.cfg.optimizer.batch_size))):
            result = self.train_step([manifest.records[index] for index in batch], batch_slots, epoch, step)
            losses.append(float(result['loss']))
            weights.append(len(batch))
            predictions.append(result['predictions'])
            labels.append(result['labels'])
        return EpochStats(epoch=epoch, loss=float(np.average(losses, weights=weights)),
                          acc=accuracy(np.concatenate(predictions), np.concatenate(labels)),
                          seconds=time.perf_counter() - started)

    def fit(self, train_manifest: DatasetManifest, val_manifest: Optional[DatasetManifest] = None) -> TrainResult:
        best_score, best_path = -1.0, None
        for epoch in range(self.cfg.train.epochs):
            stats = self.run_epoch(train_manifest, epoch)
            if val_manifest is not None:
                outputs = predict_records(self.model, val_manifest.records, self.cfg, cache=self.cache)
                stats.val_acc = accuracy(outputs.probs >= 0.5, val_manifest.labels)
                if 0 < val_manifest.labels.sum() < len(val_manifest):
                    stats.val_ap = average_precision(outputs.probs, val_manifest.labels)
            self.history.append(stats)
            logger.info('epoch=%d loss=%.4f acc=%.4f val_acc=%s seconds=%.1f', epoch, stats.loss, stats.acc,
                        'nan' if stats.val_acc is None else f'{stats.val_acc:.4f}', stats.seconds)
            if self.run_dir is not None:
                best_path = self._write_epoch(stats, best_score, best_path)
                best_score = max(best_score, self._score(stats))
        return TrainResult(model=self.model, history=self.history, run_dir=self.run_dir, best_checkpoint=best_path)

    @staticmethod
    def _score(stats: EpochStats) -> float:
        return stats.val_acc if stats.val_acc is not None else stats.acc

    def _write_epoch(self, stats: EpochStats, best_score: float, best_path: Optional[Path]) -> Optional[Path]:
        meta = {'epoch': stats.epoch, 'config_hash': config_hash(self.cfg),
                'sampling_mode': run_sampling_mode(self.cfg)}
        save_checkpoint(self.model, self.run_dir / 'checkpoints' / f'epoch_{stats.epoch:03d}.ckpt', meta=meta)
        if self._score(stats) > best_score:
            best_path = save_checkpoint(self.model, self.run_dir / 'checkpoints' / 'best.ckpt', meta=meta)
        write_rows(self.run_dir / 'metrics.csv', [stats.dict() for stats in self.history],
                   list(EpochStats.__fields__))
        return best_path


def train(manifest: DatasetManifest, cfg: RunConfig, run_dir: Optional[Path] = None,
          model: Optional[S2FNet] = None) -> TrainResult:
    """
    Splits the manifest, trains for cfg.train.epochs and checkpoints into `run_dir` when given.
    """
    train_manifest, val_manifest = manifest.split(cfg.seed, cfg.train.val_fraction)
    logger.info('train records=%d val_records=%d ablation=%s', len(train_manifest),
                0 if val_manifest is None else len(val_manifest), cfg.ablation.value)
    return Trainer(cfg, model=model, run_dir=run_dir).fit(train_manifest, val_manifest)
