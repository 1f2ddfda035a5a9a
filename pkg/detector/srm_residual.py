"""
Fixed SRM high-pass residuals (30 kernels x RGB = 90 channels) and the learnable 90 -> 32 encoder.
"""
from functools import lru_cache
from typing import Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, validator

from detector.constants import (
    ArrowEnum,
    SrmBaseEnum,
    SRM_BASE_KERNELS,
    SRM_KERNEL_COUNT,
    SRM_KERNEL_SIZE,
    SRM_OUT_CHANNELS,
    SRM_ROTATIONS,
    FEATURE_CHANNELS,
)
from tensor.constants import PaddingModeEnum
from tensor.tensor_core import ShapeError, Tensor, as_tensor
from tensor.tensor_nn import ConvBnReLU, Module
from tensor.tensor_ops import conv2d


def _ring(radius: int, size: int = SRM_KERNEL_SIZE) -> List[Tuple[int, int]]:
    """
    Cells at Chebyshev distance `radius` from the centre, clockwise from the top-left corner.
    """
    center = size // 2
    low, high = center - radius, center + radius
    cells = [(low, col) for col in range(low, high + 1)]
    cells += [(row, high) for row in range(low + 1, high + 1)]
    cells += [(high, col) for col in range(high - 1, low - 1, -1)]
    cells += [(row, low) for row in range(high - 1, low, -1)]
    return cells


def rotate_kernel(kernel: np.ndarray, steps: int) -> np.ndarray:
    """
    Rotates a square integer kernel clockwise by `steps` x 45 degrees; ring r moves by r cells per step.
    """
    kernel = np.asarray(kernel)
    size = kernel.shape[0]
    rotated = np.zeros_like(kernel)
    rotated[size // 2, size // 2] = kernel[size // 2, size // 2]
    for radius in range(1, size // 2 + 1):
        cells = _ring(radius, size)
        for index, (row, col) in enumerate(cells):
            target = cells[(index + steps * radius) % len(cells)]
            rotated[target] = kernel[row, col]
    return rotated


class SrmKernel(NamedTuple):
    base: SrmBaseEnum
    arrow: ArrowEnum
    weights: np.ndarray

    @property
    def label(self) -> str:
        return f'{self.base.value}{self.arrow.glyph}'


class SrmFilterBank:
    """
    Immutable bank of 30 zero-sum 5x5 integer kernels.
    """
    def __init__(self, kernels: List[SrmKernel]) -> None:
        for kernel in kernels:
            kernel.weights.setflags(write=False)
        self._kernels: Tuple[SrmKernel, ...] = tuple(kernels)
        weights = np.stack([kernel.weights for kernel in kernels]).astype(np.float64)
        weights.setflags(write=False)
        self._weights = weights

    @property
    def kernels(self) -> Tuple[SrmKernel, ...]:
        return self._kernels

    @property
    def weights(self) -> np.ndarray:
        """
        Read-only [30,5,5] float64 array in bank order.
        """
        return self._weights

    def __len__(self) -> int:
        return len(self._kernels)

    def __iter__(self) -> Iterator[SrmKernel]:
        return iter(self._kernels)

    def channel_labels(self) -> List[str]:
        """
        Output channel names, kernel-major then RGB.
        """
        return [f'{kernel.label}:{color}' for kernel in self._kernels for color in 'RGB']


@lru_cache(maxsize=1)
def build_filter_bank() -> SrmFilterBank:
    kernels = []
    for base, arrows in SRM_ROTATIONS.items():
        weights = np.array(SRM_BASE_KERNELS[base], dtype=np.int64)
        for arrow in arrows:
            kernels.append(SrmKernel(base=base, arrow=arrow, weights=rotate_kernel(weights, int(arrow))))
    if len(kernels) != SRM_KERNEL_COUNT:
        raise RuntimeError(f'SRM bank has {len(kernels)} kernels, expected {SRM_KERNEL_COUNT}.')
    return SrmFilterBank(kernels)


def apply_srm(x: Tensor, bank: Optional[SrmFilterBank] = None) -> Tensor:
    """
    Depthwise SRM filtering of a [B,3,H,W] input, clamp-to-edge padding 2 -> [B,90,H,W].
    """
    bank = bank if bank is not None else build_filter_bank()
    if x.ndim != 4 or x.shape[1] != 3:
        raise ShapeError('apply_srm', '[B,3,H,W]', x.shape)
    batch, _, height, width = x.shape
    count = len(bank)
    kernel = as_tensor(bank.weights[:, np.newaxis], like=x)
    pad = SRM_KERNEL_SIZE // 2
    residuals = conv2d(x.reshape(batch * 3, 1, height, width), kernel, padding=pad,
                       padding_mode=PaddingModeEnum.edge)
    return residuals.reshape(batch, 3, count, height, width).transpose(0, 2, 1, 3, 4).reshape(
        batch, 3 * count, height, width)


class SrmConfig(BaseModel):
    """
    Encoder geometry; the filter bank itself is fixed.
    """
    kernel_size: int = 3
    out_channels: int = FEATURE_CHANNELS

    class Config:
        """
        Pydantic config class.
        """
        validate_assignment = True

    @validator('kernel_size')
    def check_kernel_size(cls, value) -> int:
        if value < 1 or value % 2 == 0:
            raise ValueError(f'field value {value} is invalid. Should be a positive odd number.')
        return value


class SrmEncoder(Module):
    """
    Conv(90 -> 32)-BN-ReLU projection of the residuals.
    """
    def __init__(self, cfg: SrmConfig = SrmConfig(), rng: Optional[np.random.Generator] = None) -> None:
        self.block = ConvBnReLU(SRM_OUT_CHANNELS, cfg.out_channels, cfg.kernel_size, rng=rng)

    def forward(self, residuals: Tensor) -> Tensor:
        return encode(residuals, self)


def encode(residuals: Tensor, encoder: SrmEncoder) -> Tensor:
    if residuals.ndim != 4 or residuals.shape[1] != SRM_OUT_CHANNELS:
        raise ShapeError('encode', f'[B,{SRM_OUT_CHANNELS},H,W]', residuals.shape)
    return encoder.block(residuals)


def bank_table(bank: Optional[SrmFilterBank] = None) -> List[Dict[str, object]]:
    """
    One row per kernel: index, base, arrow and the 25 integer coefficients in row-major order.
    """
    bank = bank if bank is not None else build_filter_bank()
    rows = []
    for index, kernel in enumerate(bank):
        row = {'index': index, 'base': kernel.base.value, 'arrow': kernel.arrow.name}
        row.update({f'w{r}{c}': int(kernel.weights[r, c])
                    for r in range(SRM_KERNEL_SIZE) for c in range(SRM_KERNEL_SIZE)})
        rows.append(row)
    return rows
