"""
Synthetic real/fake fixture with implanted upsampling artifacts.

A real image is a smoothed random RGB field. Its fake twin is the same field box-downsampled by 2
and upsampled back with nearest neighbour, which leaves period-2 block structure in the spectrum.
"""
import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from pydantic import BaseModel, validator
from scipy.ndimage import gaussian_filter

from imaging.image_io import ImageU8, round_to_u8, save_png
from training.constants import LabelEnum
from training.train_dataset import DatasetManifest, ManifestRecord

logger = logging.getLogger(__name__)

TOY_SOURCE = 'toy'


class ToyConfig(BaseModel):
    count: int = 500
    size: int = 64
    smooth_sigma: float = 3.0
    mean: float = 128.0
    std: float = 40.0
    seed: int = 0

    class Config:
        """
        Pydantic config class.
        """
        validate_assignment = True

    @validator('count')
    def check_count(cls, value) -> int:
        if value < 1:
            raise ValueError(f'field value {value} is invalid. Should be >= 1.')
        return value

    @validator('size')
    def check_size(cls, value) -> int:
        if value < 2 or value % 2:
            raise ValueError(f'field value {value} is invalid. Should be an even number >= 2.')
        return value

    @validator('smooth_sigma', 'std')
    def check_positive(cls, value) -> float:
        if value <= 0:
            raise ValueError(f'field value {value} is invalid. Should be > 0.')
        return value


def smooth_field(rng: np.random.Generator, size: int, sigma: float, mean: float, std: float) -> np.ndarray:
    """
    Float [size, size, 3] field, blurred per channel and rescaled to the requested mean and std.
    """
    noise = rng.standard_normal((size, size, 3))
    field = gaussian_filter(noise, sigma=(sigma, sigma, 0), mode='wrap')
    spread = field.std()
    field = (field - field.mean()) / (spread if spread > 0 else 1.0)
    return field * std + mean


def upsample_artifact(field: np.ndarray) -> np.ndarray:
    """
    2x2 box average followed by 2x nearest-neighbour upsampling.
    """
    height, width, channels = field.shape
    low = field.reshape(height // 2, 2, width // 2, 2, channels).mean(axis=(1, 3))
    return np.repeat(np.repeat(low, 2, axis=0), 2, axis=1)


def toy_pair(cfg: ToyConfig, index: int) -> Tuple[ImageU8, ImageU8]:
    rng = np.random.default_rng([cfg.seed, index])
    field = smooth_field(rng, cfg.size, cfg.smooth_sigma, cfg.mean, cfg.std)
    return ImageU8(data=round_to_u8(field)), ImageU8(data=round_to_u8(upsample_artifact(field)))


def generate_toy_dataset(out_dir: Union[str, Path], cfg: ToyConfig = ToyConfig()) -> DatasetManifest:
    """
    Writes real/real_XXXX.png, fake/fake_XXXX.png and manifest.csv with paths relative to `out_dir`.
    """
    out_dir = Path(out_dir)
    records = []
    for index in range(cfg.count):
        real, fake = toy_pair(cfg, index)
        for label, image in ((LabelEnum.real, real), (LabelEnum.fake, fake)):
            relative = Path(label.name) / f'{label.name}_{index:04d}.png'
            save_png(image, out_dir / relative)
            records.append(ManifestRecord(path=relative.as_posix(), label=label, source=TOY_SOURCE))
    DatasetManifest(records=records).to_csv(out_dir / 'manifest.csv')
    manifest = DatasetManifest.from_csv(out_dir / 'manifest.csv')
    logger.info('toy dataset out_dir=%s real=%d fake=%d size=%d', out_dir, cfg.count, cfg.count, cfg.size)
    return manifest
