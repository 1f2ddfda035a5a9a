from enum import Enum
from typing import List

import numpy as np
from aenum import MultiValueEnum


class PrecisionEnum(MultiValueEnum):
    """
    Scalar precision of tensor buffers.
    32-bit is used for training throughput, 64-bit for gradient verification.
    """
    float32 = 'float32', 'fp32', 32
    float64 = 'float64', 'fp64', 64

    @property
    def real_dtype(self) -> np.dtype:
        return np.dtype(np.float32) if self is PrecisionEnum.float32 else np.dtype(np.float64)

    @property
    def complex_dtype(self) -> np.dtype:
        return np.dtype(np.complex64) if self is PrecisionEnum.float32 else np.dtype(np.complex128)

    @property
    def code(self) -> int:
        """
        Single byte stored in checkpoint headers.
        """
        return 4 if self is PrecisionEnum.float32 else 8

    @classmethod
    def from_dtype(cls, dtype) -> 'PrecisionEnum':
        dtype = np.dtype(dtype)
        if dtype in (np.float32, np.complex64):
            return cls.float32
        if dtype in (np.float64, np.complex128):
            return cls.float64
        raise ValueError(f'Unsupported tensor dtype {dtype}. Should be float32 or float64.')

    @classmethod
    def from_code(cls, code: int) -> 'PrecisionEnum':
        for item in cls:
            if item.code == code:
                return item
        raise ValueError(f'Unknown precision code {code}.')

    @classmethod
    def has_value(cls, value) -> bool:
        return value in cls.all_values()

    @classmethod
    def all_values(cls) -> List:
        return [value for item in cls for value in item.values]


class PaddingModeEnum(str, Enum):
    """
    Border handling of conv2d.
    """
    zeros = 'zeros'
    # Clamp-to-edge
    edge = 'edge'


# Defaults of the BatchNorm layers
BN_MOMENTUM = 0.1
BN_EPS = 1e-5

# Defaults of the Adam optimizer
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
