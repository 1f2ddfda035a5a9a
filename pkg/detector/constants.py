from enum import Enum, IntEnum
from typing import Dict, List, Tuple

from aenum import MultiValueEnum


class ArrowEnum(IntEnum):
    """
    Direction a high-pass kernel points to, as the number of clockwise 45 degree steps from `up`.
    """
    up = 0
    up_right = 1
    right = 2
    down_right = 3
    down = 4
    down_left = 5
    left = 6
    up_left = 7

    @property
    def glyph(self) -> str:
        return '↑↗→↘↓↙←↖'[self.value]

    @classmethod
    def has_value(cls, value) -> bool:
        return value in cls._value2member_map_

    @classmethod
    def dict(cls) -> Dict[str, int]:
        return {item.name: item.value for item in cls}


class SrmBaseEnum(str, Enum):
    a = 'a'
    b = 'b'
    c = 'c'
    d = 'd'
    e = 'e'
    f = 'f'
    g = 'g'


# 5x5 integer base kernels, all pointing up. Kernels a and c sit on the centre column.
SRM_BASE_KERNELS: Dict[SrmBaseEnum, Tuple[Tuple[int, ...], ...]] = {
    SrmBaseEnum.a: (
        (0, 0, 0, 0, 0),
        (0, 0, 1, 0, 0),
        (0, 0, -1, 0, 0),
        (0, 0, 0, 0, 0),
        (0, 0, 0, 0, 0),
    ),
    SrmBaseEnum.b: (
        (0, 0, -1, 0, 0),
        (0, 0, 3, 0, 0),
        (0, 0, -3, 0, 0),
        (0, 0, 1, 0, 0),
        (0, 0, 0, 0, 0),
    ),
    SrmBaseEnum.c: (
        (0, 0, 0, 0, 0),
        (0, 0, 1, 0, 0),
        (0, 0, -2, 0, 0),
        (0, 0, 1, 0, 0),
        (0, 0, 0, 0, 0),
    ),
    SrmBaseEnum.d: (
        (0, 0, 0, 0, 0),
        (0, -1, 2, -1, 0),
        (0, 2, -4, 2, 0),
        (0, 0, 0, 0, 0),
        (0, 0, 0, 0, 0),
    ),
    SrmBaseEnum.e: (
        (-1, 2, -2, 2, -1),
        (2, -6, 8, -6, 2),
        (-2, 8, -12, 8, -2),
        (0, 0, 0, 0, 0),
        (0, 0, 0, 0, 0),
    ),
    SrmBaseEnum.f: (
        (0, 0, 0, 0, 0),
        (0, -1, 2, -1, 0),
        (0, 2, -4, 2, 0),
        (0, -1, 2, -1, 0),
        (0, 0, 0, 0, 0),
    ),
    SrmBaseEnum.g: (
        (-1, 2, -2, 2, -1),
        (2, -6, 8, -6, 2),
        (-2, 8, -12, 8, -2),
        (2, -6, 8, -6, 2),
        (-1, 2, -2, 2, -1),
    ),
}

_EIGHT_WAY = [ArrowEnum.up_right, ArrowEnum.right, ArrowEnum.down_right, ArrowEnum.down,
              ArrowEnum.down_left, ArrowEnum.left, ArrowEnum.up_left, ArrowEnum.up]
_FOUR_WAY = [ArrowEnum.right, ArrowEnum.down, ArrowEnum.left, ArrowEnum.up]

# Directional variants per base kernel, in bank order (30 kernels in total)
SRM_ROTATIONS: Dict[SrmBaseEnum, List[ArrowEnum]] = {
    SrmBaseEnum.a: _EIGHT_WAY,
    SrmBaseEnum.b: _EIGHT_WAY,
    SrmBaseEnum.c: [ArrowEnum.right, ArrowEnum.down, ArrowEnum.up_right, ArrowEnum.down_right],
    SrmBaseEnum.d: _FOUR_WAY,
    SrmBaseEnum.e: _FOUR_WAY,
    SrmBaseEnum.f: [ArrowEnum.up],
    SrmBaseEnum.g: [ArrowEnum.up],
}

SRM_KERNEL_SIZE = 5
SRM_KERNEL_COUNT = 30
SRM_OUT_CHANNELS = 3 * SRM_KERNEL_COUNT


class SamplingModeEnum(str, Enum):
    """
    How patch origins are drawn.
    """
    # Distinct cells of a randomly offset non-overlapping grid
    grid = 'grid'
    # Independent uniform origins, overlap allowed
    uniform = 'uniform'


class BranchEnum(str, Enum):
    """
    LFA branch: the texture-rich view is screened by the high-frequency mask, the texture-poor view by the low one.
    """
    high = 'high'
    low = 'low'


class AblationEnum(MultiValueEnum):
    full = 'full'
    no_lfa = 'no_lfa', 'wo_lfa'
    no_low = 'no_low', 'wo_low'
    no_high = 'no_high', 'wo_high'

    @property
    def bypass_high(self) -> bool:
        """
        Rich-branch gain replaced by identity.
        """
        return self in (AblationEnum.no_lfa, AblationEnum.no_high)

    @property
    def bypass_low(self) -> bool:
        return self in (AblationEnum.no_lfa, AblationEnum.no_low)

    @classmethod
    def has_value(cls, value) -> bool:
        return value in cls.all_values()

    @classmethod
    def all_values(cls) -> List[str]:
        return [value for item in cls for value in item.values]


# Channels produced by each SRM encoder and consumed by each LFA branch
FEATURE_CHANNELS = 32
