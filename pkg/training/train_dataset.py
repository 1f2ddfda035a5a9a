"""
Dataset manifests and the per-image preprocessing pipeline:
decode -> size normalization -> degradation -> augmentation (training only) -> smash.
"""
import hashlib
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, validator

from analysis.csv_utils import read_rows, write_rows
from detector.smash_reconstruct import ViewPair, smash
from imaging.image_degrade import DegradeSpec, apply_degradation, augment
from imaging.image_io import ImageU8, load_image, normalize_size
from training.constants import LabelEnum, MANIFEST_COLUMNS
from training.train_config import RunConfig

logger = logging.getLogger(__name__)


class ManifestRecord(BaseModel):
    path: str
    label: LabelEnum
    source: str = ''

    class Config:
        """
        Pydantic config class.
        """
        validate_assignment = True

    @validator('label', pre=True)
    def check_label(cls, value) -> LabelEnum:
        if isinstance(value, LabelEnum):
            return value
        return LabelEnum.from_text(value)


class DatasetManifest(BaseModel):
    """
    Records of (path, label, source). Relative paths are resolved against the manifest directory.
    """
    records: List[ManifestRecord]

    @validator('records')
    def check_records(cls, value) -> List[ManifestRecord]:
        if not value:
            raise ValueError('manifest is empty. Should hold at least one record.')
        return value

    @classmethod
    def from_csv(cls, path: Union[str, Path], check_paths: bool = True) -> 'DatasetManifest':
        path = Path(path)
        rows = read_rows(path)
        if rows and not set(MANIFEST_COLUMNS).issubset(rows[0]):
            raise ValueError(f'Manifest "{path}" header {list(rows[0])} is invalid. '
                             f'Should be {",".join(MANIFEST_COLUMNS)}.')
        records = []
        for row in rows:
            image_path = Path(row['path'])
            if not image_path.is_absolute():
                image_path = path.parent / image_path
            if check_paths and not image_path.exists():
                raise FileNotFoundError(f'Manifest "{path}" references missing image "{image_path}"')
            records.append(ManifestRecord(path=str(image_path), label=row['label'], source=row['source']))
        return cls(records=records)

    def to_csv(self, path: Union[str, Path]) -> Path:
        return write_rows(path, [{'path': record.path, 'label': record.label.name, 'source': record.source}
                                 for record in self.records], MANIFEST_COLUMNS)

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(record.label) for record in self.records])

    @property
    def sources(self) -> List[str]:
        return sorted({record.source for record in self.records})

    def __len__(self) -> int:
        return len(self.records)

    def split(self, seed: int, val_fraction: float) -> Tuple['DatasetManifest', Optional['DatasetManifest']]:
        """
        A record goes to validation when sha256("seed:path") mod 1000 < 1000 * val_fraction.
        With val_fraction > 0 and >= 2 records both splits are kept non-empty.
        """
        if val_fraction <= 0:
            return self, None
        digests = [int(hashlib.sha256(f'{seed}:{record.path}'.encode('utf-8')).hexdigest(), 16)
                   for record in self.records]
        is_val = [digest % 1000 < 1000 * val_fraction for digest in digests]
        if len(self.records) >= 2 and (all(is_val) or not any(is_val)):
            smallest = int(np.argmin([digest for digest in digests]))
            is_val[smallest] = not is_val[smallest]
        train = [record for record, flag in zip(self.records, is_val) if not flag]
        val = [record for record, flag in zip(self.records, is_val) if flag]
        if not train:
            return self, None
        return DatasetManifest(records=train), (DatasetManifest(records=val) if val else None)


class ImageCache:
    """
    Thread-safe store of decoded, size-normalized images keyed by path.
    """
    def __init__(self) -> None:
        self._images: Dict[str, ImageU8] = {}
        self._lock = threading.Lock()

    def get(self, path: str, loader: Callable[[str], ImageU8]) -> ImageU8:
        with self._lock:
            image = self._images.get(path)
        if image is None:
            image = loader(path)
            with self._lock:
                self._images.setdefault(path, image)
        return image

    def __len__(self) -> int:
        return len(self._images)


def image_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """
    Generator of one training image, independent of worker scheduling.
    """
    return np.random.default_rng([seed, epoch, index])


def load_normalized(path: str, cfg: RunConfig) -> ImageU8:
    image = load_image(path)
    if cfg.preprocess.normalize:
        image = normalize_size(image, cfg.preprocess.crop_size)
    return image


def preprocess(image: ImageU8, cfg: RunConfig, rng: np.random.Generator, train: bool,
               degrade: Optional[DegradeSpec] = None) -> ViewPair:
    image = apply_degradation(image, degrade)
    if train:
        image = augment(image, cfg.augment, rng)
    return smash(image, cfg.smash, rng)


def prepare_views(records: Sequence[ManifestRecord], cfg: RunConfig, train: bool, epoch: int = 0,
                  indices: Optional[Sequence[int]] = None, degrade: Optional[DegradeSpec] = None,
                  cache: Optional[ImageCache] = None) -> List[ViewPair]:
    """
    Preprocesses records on a worker pool. Output order follows `records`.
    Training images draw from image_rng(seed, epoch, index); evaluation images from a fresh generator
    seeded by smash.seed, so identical images give identical views.
    """
    indices = list(indices) if indices is not None else list(range(len(records)))

    def load(path: str) -> ImageU8:
        if cache is not None:
            return cache.get(path, lambda key: load_normalized(key, cfg))
        return load_normalized(path, cfg)

    def run(item: Tuple[ManifestRecord, int]) -> ViewPair:
        record, index = item
        rng = image_rng(cfg.seed, epoch, index) if train else np.random.default_rng(cfg.smash.seed)
        return preprocess(load(record.path), cfg, rng, train=train, degrade=degrade)

    with ThreadPoolExecutor(max_workers=cfg.train.workers) as executor:
        return list(executor.map(run, zip(records, indices)))


def epoch_order(manifest: DatasetManifest, seed: int, epoch: int, balanced: bool = False) -> List[int]:
    """
    Shuffled record indices of one epoch. Balanced mode oversamples the minority class to the majority count.
    """
    rng = np.random.default_rng([seed, epoch, 1 << 20])
    order = np.arange(len(manifest))
    if balanced:
        labels = manifest.labels
        groups = [order[labels == label] for label in (0, 1)]
        if all(len(group) for group in groups):
            target = max(len(group) for group in groups)
            order = np.concatenate([group if len(group) == target else
                                    np.concatenate([group, rng.choice(group, target - len(group))])
                                    for group in groups])
    return [int(index) for index in rng.permutation(order)]
