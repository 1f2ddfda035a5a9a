"""
Single-image analysis and export of the pooled discriminator features.
"""
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, validator

from analysis.csv_utils import write_rows
from detector.s2f_net import S2FNet
from detector.smash_reconstruct import stack_views
from training.constants import LabelEnum
from training.train_config import RunConfig
from training.train_dataset import DatasetManifest, load_normalized, preprocess
from training.train_loop import predict_records

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class AnalysisResult(BaseModel):
    path: str
    prob_fake: float
    label: str
    logit: float
    energy_high: Optional[List[float]] = None
    energy_low: Optional[List[float]] = None

    @validator('prob_fake')
    def check_prob(cls, value) -> float:
        if value < 0 or value > 1:
            raise ValueError(f'field value {value} is invalid. Should be in 0 to 1 range.')
        return value


def analyze(image_path: PathLike, model: S2FNet, cfg: RunConfig) -> AnalysisResult:
    """
    Eval-mode prediction of one image, smashed with the fixed smash seed.
    """
    image = load_normalized(str(image_path), cfg)
    views = preprocess(image, cfg, np.random.default_rng(cfg.smash.seed), train=False)
    prediction = model.predict(*stack_views([views]))[0]
    energies = model.last_energies
    result = AnalysisResult(
        path=str(image_path),
        prob_fake=prediction.prob,
        label=LabelEnum(int(prediction.label_hat)).name,
        logit=prediction.logit,
        energy_high=None if energies['high'] is None else np.asarray(energies['high'])[0].tolist(),
        energy_low=None if energies['low'] is None else np.asarray(energies['low'])[0].tolist(),
    )
    logger.debug('analyze path=%s prob=%.6f', image_path, result.prob_fake)
    return result


def feature_columns(width: int) -> List[str]:
    return [f'f{index}' for index in range(width)] + ['label', 'source']


def export_features(manifest: DatasetManifest, model: S2FNet, cfg: RunConfig, path: PathLike) -> Path:
    """
    One row per record: the pooled features before the FC layer, then label and source.
    """
    outputs = predict_records(model, manifest.records, cfg)
    width = outputs.features.shape[1]
    rows = []
    for record, features in zip(manifest.records, outputs.features):
        row = {f'f{index}': float(value) for index, value in enumerate(features)}
        row.update(label=record.label.name, source=record.source)
        rows.append(row)
    logger.info('features records=%d width=%d path=%s', len(rows), width, path)
    return write_rows(path, rows, feature_columns(width))
