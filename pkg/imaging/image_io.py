import logging
from pathlib import Path
from typing import List, Union

import numpy as np
from PIL import Image
from pydantic import BaseModel, validator

from imaging.constants import IMAGE_SUFFIXES, PIXEL_MAX
from tensor.tensor_core import Tensor

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ImageLoadError(OSError):
    """
    Unreadable, missing or corrupt image file.
    """
    def __init__(self, path: PathLike, reason: str) -> None:
        self.path = str(path)
        super().__init__(f'Cannot load image "{path}": {reason}')


class ImageU8(BaseModel):
    """
    8-bit RGB image stored as an interleaved (height, width, 3) array.
    """
    data: np.ndarray

    class Config:
        """
        Pydantic config class.
        """
        arbitrary_types_allowed = True
        validate_assignment = True

    @validator('data')
    def check_data(cls, value) -> np.ndarray:
        value = np.asarray(value)
        if value.ndim != 3 or value.shape[2] != 3:
            raise ValueError(f'image shape {value.shape} is invalid. Should be (height, width, 3).')
        if value.shape[0] < 1 or value.shape[1] < 1:
            raise ValueError(f'image shape {value.shape} is invalid. Should be non-empty.')
        if value.dtype != np.uint8:
            raise ValueError(f'image dtype {value.dtype} is invalid. Should be uint8.')
        return np.ascontiguousarray(value)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def to_pil(self) -> Image.Image:
        return Image.fromarray(self.data)

    @classmethod
    def from_pil(cls, image: Image.Image) -> 'ImageU8':
        return cls(data=np.asarray(image.convert('RGB'), dtype=np.uint8).copy())


def round_to_u8(values: np.ndarray) -> np.ndarray:
    """
    Rounds half up and clips to the 8-bit range.
    """
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 0, PIXEL_MAX).astype(np.uint8)


def load_image(path: PathLike) -> ImageU8:
    """
    Decodes a PNG or JPEG file to RGB. Grayscale is promoted to 3 channels and alpha is dropped.
    """
    try:
        with Image.open(path) as image:
            image.load()
            return ImageU8.from_pil(image)
    except FileNotFoundError:
        raise ImageLoadError(path, 'file does not exist') from None
    except (OSError, SyntaxError, ValueError) as error:
        raise ImageLoadError(path, str(error) or type(error).__name__) from error


def save_png(image: ImageU8, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image.to_pil().save(path, format='PNG')
    return path


def to_tensor(image: ImageU8) -> Tensor:
    """
    Returns a [1,3,H,W] tensor with values scaled to [0,1], channel order R,G,B.
    """
    return Tensor(image.data.transpose(2, 0, 1)[np.newaxis].astype(np.float64) / PIXEL_MAX)


def to_grayscale(image: ImageU8) -> np.ndarray:
    """
    Unweighted RGB mean rounded to 8 bits.
    """
    return round_to_u8(image.data.astype(np.float64).mean(axis=2))


def normalize_size(image: ImageU8, crop_size: int) -> ImageU8:
    """
    Resizes the shorter side to `crop_size` (bilinear), then centre-crops to crop_size x crop_size.
    """
    if crop_size < 1:
        raise ValueError(f'crop size {crop_size} is invalid. Should be >= 1.')
    height, width = image.height, image.width
    shorter = min(height, width)
    if shorter != crop_size:
        scale = crop_size / shorter
        new_height = crop_size if height == shorter else int(np.floor(height * scale + 0.5))
        new_width = crop_size if width == shorter else int(np.floor(width * scale + 0.5))
        resized = image.to_pil().resize((new_width, new_height), resample=Image.BILINEAR)
        image = ImageU8.from_pil(resized)
        height, width = new_height, new_width
    top = (height - crop_size) // 2
    left = (width - crop_size) // 2
    return ImageU8(data=image.data[top:top + crop_size, left:left + crop_size])


def list_images(directory: PathLike) -> List[Path]:
    """
    Image files directly under `directory`, in sorted path order.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f'Directory "{directory}" does not exist')
    paths = sorted(path for path in directory.iterdir() if path.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise ValueError(f'Directory "{directory}" holds no images. Should hold at least one of {IMAGE_SUFFIXES}.')
    return paths
