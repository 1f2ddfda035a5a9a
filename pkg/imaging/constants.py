from enum import Enum
from typing import List

from aenum import MultiValueEnum


class DegradeKindEnum(MultiValueEnum):
    """
    Robustness degradations. Short aliases are accepted on the command line (e.g. `jpeg:95`, `blur:1.0`).
    """
    jpeg = 'jpeg', 'jpg'
    gaussian_blur = 'gaussian_blur', 'blur'
    downsample = 'downsample', 'resize'

    @classmethod
    def has_value(cls, value) -> bool:
        return value in cls.all_values()

    @classmethod
    def all_values(cls) -> List[str]:
        return [value for item in cls for value in item.values]


class AugmentKindEnum(str, Enum):
    """
    Training-time augmentation actually applied to an image.
    """
    none = 'none'
    jpeg = 'jpeg'
    gaussian_blur = 'gaussian_blur'


# Maximum 8-bit pixel value
PIXEL_MAX = 255
# Side length images are normalized to before smashing
DEFAULT_CROP_SIZE = 256
# Suffixes picked up by the directory analyses
IMAGE_SUFFIXES = ('.png', '.jpg', '.jpeg', '.bmp')
