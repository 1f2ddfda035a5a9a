"""
Directory-averaged frequency maps: centred FFT log magnitude and |DCT-II|.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, validator
from scipy.fft import dctn

from analysis.csv_utils import write_matrix, write_rows
from imaging.image_io import list_images, load_image, to_grayscale

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class SpectrumSummary(BaseModel):
    path: str
    mean_log_magnitude: float
    high_freq_ratio: float

    @validator('high_freq_ratio')
    def check_ratio(cls, value) -> float:
        if value < 0 or value > 1:
            raise ValueError(f'field value {value} is invalid. Should be in 0 to 1 range.')
        return value


class SpectraReport(BaseModel):
    """
    Mean maps over `count` grayscale images cropped to a common (height, width).
    """
    fft_log_magnitude: np.ndarray
    dct_magnitude: np.ndarray
    summaries: List[SpectrumSummary]
    count: int

    class Config:
        """
        Pydantic config class.
        """
        arbitrary_types_allowed = True

    @validator('count')
    def check_count(cls, value) -> int:
        if value < 1:
            raise ValueError(f'field value {value} is invalid. Should be >= 1.')
        return value

    def write(self, out_dir: PathLike) -> List[Path]:
        out_dir = Path(out_dir)
        return [write_matrix(out_dir / 'fft_log_magnitude.csv', self.fft_log_magnitude),
                write_matrix(out_dir / 'dct_magnitude.csv', self.dct_magnitude),
                write_rows(out_dir / 'spectra_summary.csv', [item.dict() for item in self.summaries],
                           list(SpectrumSummary.__fields__))]


def dct2(gray: np.ndarray) -> np.ndarray:
    """
    Unnormalized DCT-II: X[k,l] = sum x[m,n] cos(pi(2m+1)k/2M) cos(pi(2n+1)l/2N).
    """
    # scipy's type-2 transform carries a factor 2 per axis
    return dctn(np.asarray(gray, dtype=np.float64), type=2) / 4.0


def centered_spectrum(gray: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.fft2(np.asarray(gray, dtype=np.float64)))


def fft_log_magnitude(gray: np.ndarray) -> np.ndarray:
    """
    log(1 + |fftshift(fft2(x))|).
    """
    return np.log1p(np.abs(centered_spectrum(gray)))


def high_freq_ratio(gray: np.ndarray) -> float:
    """
    Share of spectral energy outside the centred disc of radius min(H, W) / 4.
    """
    power = np.abs(centered_spectrum(gray)) ** 2
    total = power.sum()
    if total <= 0:
        return 0.0
    height, width = power.shape
    rows, cols = np.ogrid[:height, :width]
    distance = np.hypot(rows - height // 2, cols - width // 2)
    return float(np.clip(power[distance > min(height, width) / 4].sum() / total, 0.0, 1.0))


def center_crop(array: np.ndarray, height: int, width: int) -> np.ndarray:
    top = (array.shape[0] - height) // 2
    left = (array.shape[1] - width) // 2
    return array[top:top + height, left:left + width]


def _load_gray(path: Path) -> np.ndarray:
    return to_grayscale(load_image(path)).astype(np.float64)


def load_grayscale(paths: Sequence[Path], workers: int = 4) -> List[np.ndarray]:
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_load_gray, paths))


def common_size(images: Sequence[np.ndarray]) -> Tuple[int, int]:
    return min(image.shape[0] for image in images), min(image.shape[1] for image in images)


def spectra_from_arrays(images: Sequence[np.ndarray], names: Sequence[str]) -> SpectraReport:
    if not images:
        raise ValueError('Spectra need at least one image.')
    height, width = common_size(images)
    fft_sum = np.zeros((height, width))
    dct_sum = np.zeros((height, width))
    summaries = []
    for name, image in zip(names, images):
        gray = center_crop(image, height, width)
        log_magnitude = fft_log_magnitude(gray)
        fft_sum += log_magnitude
        dct_sum += np.abs(dct2(gray))
        summaries.append(SpectrumSummary(path=name, mean_log_magnitude=float(log_magnitude.mean()),
                                         high_freq_ratio=high_freq_ratio(gray)))
    count = len(images)
    return SpectraReport(fft_log_magnitude=fft_sum / count, dct_magnitude=dct_sum / count, summaries=summaries,
                         count=count)


def spectra(directory: PathLike, workers: int = 4) -> SpectraReport:
    paths = list_images(directory)
    report = spectra_from_arrays(load_grayscale(paths, workers), [str(path) for path in paths])
    logger.info('spectra directory=%s images=%d size=%s', directory, report.count,
                'x'.join(str(dim) for dim in report.fft_log_magnitude.shape))
    return report
