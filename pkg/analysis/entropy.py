"""
Per-pixel local Shannon entropy of grayscale images.
"""
import logging
import math
from pathlib import Path
from typing import List, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, validator

from analysis.csv_utils import write_rows
from analysis.spectra import load_grayscale
from imaging.image_io import list_images

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

GRAY_LEVELS = 256


def check_window(window: int) -> int:
    if window < 1 or window % 2 == 0:
        raise ValueError(f'Window {window} is invalid. Should be an odd number >= 1.')
    return window


def local_entropy(gray: np.ndarray, window: int = 9) -> np.ndarray:
    """
    Base-2 entropy of the 256-bin histogram of the window centred on each pixel; borders clamp to the edge.
    """
    check_window(window)
    gray = np.asarray(gray).astype(np.int64)
    if gray.min() < 0 or gray.max() >= GRAY_LEVELS:
        raise ValueError(f'Gray levels {gray.min()}..{gray.max()} are invalid. Should be in 0 to 255 range.')
    padded = np.pad(gray, window // 2, mode='edge')
    windows = sliding_window_view(padded, (window, window))
    height, width = gray.shape
    size = window * window
    offsets = np.arange(width)[:, np.newaxis] * GRAY_LEVELS
    entropy = np.empty((height, width))
    for row in range(height):
        bins = (windows[row].reshape(width, size) + offsets).reshape(-1)
        counts = np.bincount(bins, minlength=width * GRAY_LEVELS).reshape(width, GRAY_LEVELS)
        probabilities = counts / size
        with np.errstate(divide='ignore', invalid='ignore'):
            terms = np.where(counts > 0, probabilities * np.log2(probabilities), 0.0)
        entropy[row] = -terms.sum(axis=1)
    # Uniform windows give -0.0
    return np.abs(entropy)


class EntropyStats(BaseModel):
    """
    Pooled histogram of per-pixel entropies; `density` integrates to 1 over the bins.
    """
    window: int
    edges: List[float]
    counts: List[int]
    density: List[float]
    mean_entropy: float
    pixels: int
    images: int

    def rows(self):
        return [{'bin_left': left, 'bin_right': right, 'count': count, 'density': density}
                for left, right, count, density in zip(self.edges[:-1], self.edges[1:], self.counts, self.density)]

    def write(self, path: PathLike) -> Path:
        return write_rows(path, self.rows(), ['bin_left', 'bin_right', 'count', 'density'])


def entropy_histogram(entropies: List[np.ndarray], window: int, bins: int = 64) -> EntropyStats:
    values = np.concatenate([item.reshape(-1) for item in entropies])
    upper = math.log2(window * window) if window > 1 else 1.0
    counts, edges = np.histogram(values, bins=bins, range=(0.0, upper))
    widths = np.diff(edges)
    density = counts / (values.size * widths)
    return EntropyStats(window=window, edges=edges.tolist(), counts=counts.tolist(), density=density.tolist(),
                        mean_entropy=float(values.mean()), pixels=int(values.size), images=len(entropies))


def entropy_stats(directory: PathLike, window: int = 9, bins: int = 64, workers: int = 4) -> EntropyStats:
    check_window(window)
    images = load_grayscale(list_images(directory), workers)
    stats = entropy_histogram([local_entropy(image, window) for image in images], window, bins)
    logger.info('entropy directory=%s images=%d window=%d mean=%.4f', directory, stats.images, window,
                stats.mean_entropy)
    return stats
