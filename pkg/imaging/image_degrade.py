"""
Training-time augmentation and the robustness degradations (JPEG re-encode, Gaussian blur, bilinear downsample).
All operations are pure functions of (image, parameters, rng).
"""
import io
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image
from pydantic import BaseModel, validator
from scipy.ndimage import correlate1d

from imaging.constants import AugmentKindEnum, DegradeKindEnum
from imaging.image_io import ImageU8, round_to_u8

logger = logging.getLogger(__name__)


class AugmentConfig(BaseModel):
    """
    Random JPEG / blur augmentation applied with probability `trigger_prob`.
    Draws come from the per-image generator passed to `augment`.
    """
    trigger_prob: float = 0.10
    jpeg_q_range: Tuple[int, int] = (70, 100)
    blur_sigma_range: Tuple[float, float] = (0.0, 1.0)

    class Config:
        """
        Pydantic config class.
        """
        validate_assignment = True

    @validator('trigger_prob')
    def check_trigger_prob(cls, value) -> float:
        if value < 0 or value > 1:
            raise ValueError(f'field value {value} is invalid. Should be in 0 to 1 range.')
        return value

    @validator('jpeg_q_range')
    def check_jpeg_q_range(cls, value) -> Tuple[int, int]:
        low, high = value
        if low > high or low < 1 or high > 100:
            raise ValueError(f'field value {value} is invalid. Should be a non-empty range within 1 to 100.')
        return value

    @validator('blur_sigma_range')
    def check_blur_sigma_range(cls, value) -> Tuple[float, float]:
        low, high = value
        if low > high or low < 0:
            raise ValueError(f'field value {value} is invalid. Should be a non-empty range of sigmas >= 0.')
        return value


class DegradeSpec(BaseModel):
    """
    One robustness degradation. Only the parameter matching `kind` is used.
    """
    kind: DegradeKindEnum
    qf: int = 95
    sigma: float = 1.0
    r: float = 0.5

    class Config:
        """
        Pydantic config class.
        """
        validate_assignment = True
        arbitrary_types_allowed = True

    @validator('kind', pre=True)
    def check_kind(cls, value) -> DegradeKindEnum:
        if isinstance(value, DegradeKindEnum):
            return value
        if not DegradeKindEnum.has_value(value):
            raise ValueError(f'field value {value} is invalid. Should be one of {DegradeKindEnum.all_values()}.')
        return DegradeKindEnum(value)

    @validator('qf')
    def check_qf(cls, value) -> int:
        if value < 1 or value > 100:
            raise ValueError(f'field value {value} is invalid. Should be in 1 to 100 range.')
        return value

    @validator('sigma')
    def check_sigma(cls, value) -> float:
        if value < 0:
            raise ValueError(f'field value {value} is invalid. Should be >= 0.')
        return value

    @validator('r')
    def check_r(cls, value) -> float:
        if value <= 0 or value > 1:
            raise ValueError(f'field value {value} is invalid. Should be in (0, 1] range.')
        return value

    @property
    def tag(self) -> str:
        if self.kind is DegradeKindEnum.jpeg:
            return f'jpeg_q{self.qf}'
        if self.kind is DegradeKindEnum.gaussian_blur:
            return f'blur_s{self.sigma:g}'
        return f'downsample_r{self.r:g}'

    @property
    def value(self) -> float:
        """
        The parameter echoed into reports.
        """
        return {DegradeKindEnum.jpeg: self.qf, DegradeKindEnum.gaussian_blur: self.sigma,
                DegradeKindEnum.downsample: self.r}[self.kind]

    @classmethod
    def from_text(cls, text: str) -> 'DegradeSpec':
        """
        Parses `kind:value`, e.g. `jpeg:95`, `blur:1.0`, `downsample:0.5`.
        """
        kind_text, _, value_text = text.partition(':')
        if not DegradeKindEnum.has_value(kind_text):
            raise ValueError(f'Degradation "{kind_text}" is invalid. Should be one of {DegradeKindEnum.all_values()}.')
        kind = DegradeKindEnum(kind_text)
        if not value_text:
            return cls(kind=kind)
        field = {DegradeKindEnum.jpeg: 'qf', DegradeKindEnum.gaussian_blur: 'sigma',
                 DegradeKindEnum.downsample: 'r'}[kind]
        value = int(value_text) if field == 'qf' else float(value_text)
        return cls(kind=kind, **{field: value})


def robustness_specs() -> List[DegradeSpec]:
    """
    JPEG QF=95, Gaussian blur sigma=1, bilinear downsample r=0.5.
    """
    return [
        DegradeSpec(kind=DegradeKindEnum.jpeg, qf=95),
        DegradeSpec(kind=DegradeKindEnum.gaussian_blur, sigma=1.0),
        DegradeSpec(kind=DegradeKindEnum.downsample, r=0.5),
    ]


def jpeg_reencode(image: ImageU8, qf: int) -> ImageU8:
    """
    Encodes to baseline JPEG at quality `qf` and decodes back.
    """
    if qf < 1 or qf > 100:
        raise ValueError(f'JPEG quality {qf} is invalid. Should be in 1 to 100 range.')
    buffer = io.BytesIO()
    image.to_pil().save(buffer, format='JPEG', quality=int(qf))
    buffer.seek(0)
    with Image.open(buffer) as decoded:
        return ImageU8.from_pil(decoded)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """
    Normalized 1-D Gaussian taps with radius ceil(3 sigma).
    """
    radius = int(math.ceil(3 * sigma))
    taps = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-taps ** 2 / (2 * sigma ** 2))
    return kernel / kernel.sum()


def gaussian_blur(image: ImageU8, sigma: float) -> ImageU8:
    """
    Separable Gaussian blur with clamp-to-edge borders. sigma=0 is the identity.
    """
    if sigma < 0:
        raise ValueError(f'Blur sigma {sigma} is invalid. Should be >= 0.')
    if sigma == 0:
        return ImageU8(data=image.data.copy())
    kernel = gaussian_kernel(sigma)
    blurred = correlate1d(image.data.astype(np.float64), kernel, axis=0, mode='nearest')
    blurred = correlate1d(blurred, kernel, axis=1, mode='nearest')
    return ImageU8(data=round_to_u8(blurred))


def _bilinear_axis(size_in: int, size_out: int, r: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-pixel centres: src = (i + 0.5) / r - 0.5
    source = (np.arange(size_out, dtype=np.float64) + 0.5) / r - 0.5
    source = np.clip(source, 0, size_in - 1)
    lower = np.floor(source).astype(int)
    upper = np.minimum(lower + 1, size_in - 1)
    return lower, upper, source - lower


def downsample_bilinear(image: ImageU8, r: float) -> ImageU8:
    """
    Bilinear rescale by factor r in (0, 1]. Output dims are round(dim * r).
    """
    if r <= 0 or r > 1:
        raise ValueError(f'Scale factor {r} is invalid. Should be in (0, 1] range.')
    out_h = int(math.floor(image.height * r + 0.5))
    out_w = int(math.floor(image.width * r + 0.5))
    if out_h == 0 or out_w == 0:
        raise ValueError(f'Scale factor {r} maps {image.height}x{image.width} to an empty image.')
    if r == 1:
        return ImageU8(data=image.data.copy())
    data = image.data.astype(np.float64)
    top, bottom, wy = _bilinear_axis(image.height, out_h, r)
    left, right, wx = _bilinear_axis(image.width, out_w, r)
    rows = data[top] * (1 - wy)[:, None, None] + data[bottom] * wy[:, None, None]
    out = rows[:, left] * (1 - wx)[None, :, None] + rows[:, right] * wx[None, :, None]
    return ImageU8(data=round_to_u8(out))


def apply_degradation(image: ImageU8, spec: Optional[DegradeSpec]) -> ImageU8:
    if spec is None:
        return image
    if spec.kind is DegradeKindEnum.jpeg:
        return jpeg_reencode(image, spec.qf)
    if spec.kind is DegradeKindEnum.gaussian_blur:
        return gaussian_blur(image, spec.sigma)
    return downsample_bilinear(image, spec.r)


def augment_with_kind(image: ImageU8, cfg: AugmentConfig,
                      rng: np.random.Generator) -> Tuple[ImageU8, AugmentKindEnum]:
    """
    With probability trigger_prob applies exactly one of JPEG(Q ~ U[q_lo, q_hi]) or blur(sigma ~ U[s_lo, s_hi]),
    chosen uniformly.
    """
    if rng.random() >= cfg.trigger_prob:
        return image, AugmentKindEnum.none
    if rng.random() < 0.5:
        low, high = cfg.jpeg_q_range
        return jpeg_reencode(image, int(rng.integers(low, high + 1))), AugmentKindEnum.jpeg
    low, high = cfg.blur_sigma_range
    return gaussian_blur(image, float(rng.uniform(low, high))), AugmentKindEnum.gaussian_blur


def augment(image: ImageU8, cfg: AugmentConfig, rng: np.random.Generator) -> ImageU8:
    return augment_with_kind(image, cfg, rng)[0]
