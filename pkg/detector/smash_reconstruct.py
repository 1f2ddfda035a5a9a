"""
Semantic smashing: crop an image into patches, rank them by texture diversity and tile the most and the least
diverse ones into a texture-rich and a texture-poor view.
"""
import logging
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, root_validator, validator

from detector.constants import SamplingModeEnum
from imaging.image_io import ImageU8, to_tensor
from tensor.tensor_core import Tensor

logger = logging.getLogger(__name__)


class SmashConfig(BaseModel):
    """
    Patch size M, patch count N, selection ratio J (percent) and output view size.
    """
    patch_size: int = 32
    patch_count: int = 192
    select_ratio: float = 33.0
    view_size: int = 256
    seed: int = 0

    class Config:
        """
        Pydantic config class.
        """
        validate_assignment = True

    @validator('patch_size')
    def check_patch_size(cls, value) -> int:
        if value < 2:
            raise ValueError(f'field value {value} is invalid. Should be >= 2.')
        return value

    @validator('select_ratio')
    def check_select_ratio(cls, value) -> float:
        if value <= 0 or value > 50:
            raise ValueError(f'field value {value} is invalid. Should be in (0, 50] range.')
        return value

    @root_validator(skip_on_failure=True)
    def check_grid(cls, values):
        patch_size, view_size, patch_count = values['patch_size'], values['view_size'], values['patch_count']
        if view_size < patch_size or view_size % patch_size:
            raise ValueError(f'view_size {view_size} is invalid. Should be a multiple of patch_size {patch_size}.')
        cells = (view_size // patch_size) ** 2
        if patch_count < 2 * cells:
            raise ValueError(f'patch_count {patch_count} is invalid. Should be >= {2 * cells} (two views of '
                             f'{cells} patches).')
        selected = patch_count * values['select_ratio'] / 100
        if abs(cells - selected) >= 1:
            logger.warning('views take %d patches each while N*J/100 = %.2f', cells, selected)
        return values

    @property
    def grid(self) -> int:
        """
        Patches per view side.
        """
        return self.view_size // self.patch_size


class Patch(NamedTuple):
    pixels: np.ndarray
    # Row and column of the top-left pixel
    x0: int
    y0: int
    ldiv: float


class ViewPair(NamedTuple):
    rich: ImageU8
    poor: ImageU8
    rich_patches: List[Patch]
    poor_patches: List[Patch]
    mode: SamplingModeEnum


def ldiv(patch: np.ndarray) -> float:
    """
    Sum over channels of absolute first differences along the horizontal, vertical, diagonal and anti-diagonal.
    """
    values = np.asarray(patch)
    values = values.astype(np.int64 if np.issubdtype(values.dtype, np.integer) else np.float64)
    if values.ndim == 2:
        values = values[:, :, np.newaxis]
    if values.shape[0] < 2 or values.shape[1] < 2:
        raise ValueError(f'Patch shape {values.shape} is invalid. Should be at least 2x2.')
    horizontal = np.abs(values[:, 1:] - values[:, :-1]).sum()
    vertical = np.abs(values[1:, :] - values[:-1, :]).sum()
    diagonal = np.abs(values[1:, 1:] - values[:-1, :-1]).sum()
    anti_diagonal = np.abs(values[1:, :-1] - values[:-1, 1:]).sum()
    return float(horizontal + vertical + diagonal + anti_diagonal)


def sampling_mode(height: int, width: int, cfg: SmashConfig) -> SamplingModeEnum:
    """
    Grid mode when the image holds at least N non-overlapping M x M cells, uniform origins otherwise.
    """
    cells = (height // cfg.patch_size) * (width // cfg.patch_size)
    return SamplingModeEnum.grid if cells >= cfg.patch_count else SamplingModeEnum.uniform


def _patch(data: np.ndarray, x0: int, y0: int, size: int) -> Patch:
    pixels = data[x0:x0 + size, y0:y0 + size]
    return Patch(pixels=pixels, x0=int(x0), y0=int(y0), ldiv=ldiv(pixels))


def sample_patches(image: ImageU8, cfg: SmashConfig, rng: np.random.Generator) -> List[Patch]:
    size, count = cfg.patch_size, cfg.patch_count
    height, width = image.height, image.width
    if height < size or width < size:
        raise ValueError(f'Image {height}x{width} is smaller than patch size {size}.')
    mode = sampling_mode(height, width, cfg)
    logger.debug('smash sampling_mode=%s height=%d width=%d', mode.value, height, width)
    if mode is SamplingModeEnum.grid:
        offset_x = int(rng.integers(0, height % size + 1))
        offset_y = int(rng.integers(0, width % size + 1))
        columns = width // size
        cells = rng.choice((height // size) * columns, size=count, replace=False)
        origins = [(offset_x + (cell // columns) * size, offset_y + (cell % columns) * size) for cell in cells]
    else:
        rows = rng.integers(0, height - size + 1, size=count)
        cols = rng.integers(0, width - size + 1, size=count)
        origins = list(zip(rows, cols))
    return [_patch(image.data, x0, y0, size) for x0, y0 in origins]


def _tile(patches: Sequence[Patch], grid: int, size: int) -> ImageU8:
    view = np.empty((grid * size, grid * size, 3), dtype=np.uint8)
    for index, patch in enumerate(patches):
        row, col = divmod(index, grid)
        view[row * size:(row + 1) * size, col * size:(col + 1) * size] = patch.pixels
    return ImageU8(data=view)


def build_views(patches: Sequence[Patch], cfg: SmashConfig,
                mode: SamplingModeEnum = SamplingModeEnum.grid) -> ViewPair:
    """
    Rich view: the g*g highest-ldiv patches in descending order. Poor view: the g*g lowest in ascending order.
    Ties are broken by origin (x0, then y0). Both are laid out in raster order.
    """
    grid = cfg.grid
    cells = grid * grid
    if len(patches) < 2 * cells:
        raise ValueError(f'{len(patches)} patches are too few. Should be >= {2 * cells}.')
    ranked = sorted(patches, key=lambda patch: (-patch.ldiv, patch.x0, patch.y0))
    rich = ranked[:cells]
    poor = ranked[-cells:][::-1]
    return ViewPair(rich=_tile(rich, grid, cfg.patch_size), poor=_tile(poor, grid, cfg.patch_size),
                    rich_patches=rich, poor_patches=poor, mode=mode)


def smash(image: ImageU8, cfg: SmashConfig, rng: Optional[np.random.Generator] = None) -> ViewPair:
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    patches = sample_patches(image, cfg, rng)
    return build_views(patches, cfg, mode=sampling_mode(image.height, image.width, cfg))


def stack_views(pairs: Sequence[ViewPair]) -> Tuple[Tensor, Tensor]:
    """
    Batches view pairs into rich and poor tensors of shape [B,3,S,S].
    """
    if not pairs:
        raise ValueError('Cannot stack an empty list of views.')
    rich = np.concatenate([to_tensor(pair.rich).data for pair in pairs], axis=0)
    poor = np.concatenate([to_tensor(pair.poor).data for pair in pairs], axis=0)
    return Tensor(rich), Tensor(poor)
