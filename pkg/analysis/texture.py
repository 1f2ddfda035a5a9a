"""
Texture richness distribution: one scalar per image (mean patch ldiv) smoothed by a Gaussian KDE.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
from pydantic import BaseModel
from scipy.stats import norm

from analysis.csv_utils import write_rows
from detector.smash_reconstruct import SmashConfig, sample_patches
from imaging.image_io import ImageU8, list_images
from training.train_config import RunConfig
from training.train_dataset import load_normalized

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

KDE_GRID_POINTS = 512
# Grid margin in bandwidths on each side of the sample range
KDE_GRID_MARGIN = 4.0
BANDWIDTH_FLOOR = 1e-3


def texture_richness(image: ImageU8, cfg: SmashConfig) -> float:
    """
    Mean ldiv over the N patches sampled with the fixed smash seed.
    """
    patches = sample_patches(image, cfg, np.random.default_rng(cfg.seed))
    return float(np.mean([patch.ldiv for patch in patches]))


def silverman_bandwidth(values: Sequence[float]) -> float:
    """
    1.06 * s * n^(-1/5), floored at max(1e-3 * |mean|, 1e-3).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError('Bandwidth needs at least one value.')
    spread = values.std(ddof=1) if values.size > 1 else 0.0
    bandwidth = 1.06 * spread * values.size ** -0.2
    return float(max(bandwidth, BANDWIDTH_FLOOR * abs(values.mean()), BANDWIDTH_FLOOR))


def kde(values: Sequence[float], points: Sequence[float], bandwidth: float) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    return norm.pdf((points[:, np.newaxis] - values[np.newaxis, :]) / bandwidth).mean(axis=1) / bandwidth


class TextureKde(BaseModel):
    paths: List[str]
    values: List[float]
    bandwidth: float
    grid: List[float]
    density: List[float]

    def write(self, out_dir: PathLike) -> List[Path]:
        out_dir = Path(out_dir)
        return [write_rows(out_dir / 'texture_kde.csv',
                           [{'x': x, 'density': density} for x, density in zip(self.grid, self.density)],
                           ['x', 'density']),
                write_rows(out_dir / 'texture_values.csv',
                           [{'path': path, 'richness': value} for path, value in zip(self.paths, self.values)],
                           ['path', 'richness'])]


def texture_kde_from_values(values: Sequence[float], paths: Sequence[str] = ()) -> TextureKde:
    values = np.asarray(values, dtype=np.float64)
    bandwidth = silverman_bandwidth(values)
    grid = np.linspace(values.min() - KDE_GRID_MARGIN * bandwidth, values.max() + KDE_GRID_MARGIN * bandwidth,
                       KDE_GRID_POINTS)
    return TextureKde(paths=list(paths) or [''] * values.size, values=values.tolist(), bandwidth=bandwidth,
                      grid=grid.tolist(), density=kde(values, grid, bandwidth).tolist())


def texture_kde(directory: PathLike, cfg: RunConfig) -> TextureKde:
    paths = list_images(directory)

    def richness(path: Path) -> float:
        return texture_richness(load_normalized(str(path), cfg), cfg.smash)

    with ThreadPoolExecutor(max_workers=cfg.train.workers) as executor:
        values = list(executor.map(richness, paths))
    result = texture_kde_from_values(values, [str(path) for path in paths])
    logger.info('texture directory=%s images=%d bandwidth=%.6g', directory, len(values), result.bandwidth)
    return result
