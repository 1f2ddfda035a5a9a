"""
Learnable frequency attention.

Each branch screens the centred spectrum of its features with a learnable mask, sums the masked magnitudes per
channel group into an energy E_g and rescales the spatial features of group g by ReLU(W_g * E_g).
The spectrum is never transformed back; it is only consumed through E_g.
"""
import logging
from typing import Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, root_validator, validator

from detector.constants import AblationEnum, BranchEnum, FEATURE_CHANNELS
from tensor.tensor_core import Buffer, ComplexTensor, Parameter, ShapeError, Tensor
from tensor.tensor_nn import Module
from tensor.tensor_ops import complex_abs, fft2, fftshift, relu, sigmoid

logger = logging.getLogger(__name__)


class LfaConfig(BaseModel):
    groups: int = 8
    channels: int = FEATURE_CHANNELS
    alpha: float = 0.5
    energy_norm: bool = True

    class Config:
        """
        Pydantic config class.
        """
        validate_assignment = True

    @validator('alpha')
    def check_alpha(cls, value) -> float:
        if value <= 0:
            raise ValueError(f'field value {value} is invalid. Should be > 0.')
        return value

    @root_validator(skip_on_failure=True)
    def check_groups(cls, values):
        groups, channels = values['groups'], values['channels']
        if groups < 1 or groups > channels or channels % groups:
            raise ValueError(f'groups {groups} is invalid. Should divide channels {channels}.')
        return values


def distance_matrix(height: int, width: int) -> np.ndarray:
    """
    Euclidean distance to (floor(H/2), floor(W/2)) divided by the largest corner distance.
    """
    if height < 1 or width < 1:
        raise ValueError(f'Mask size {height}x{width} is invalid. Should be >= 1x1.')
    center_u, center_v = height // 2, width // 2
    u = np.arange(height, dtype=np.float64)[:, np.newaxis] - center_u
    v = np.arange(width, dtype=np.float64)[np.newaxis, :] - center_v
    distance = np.sqrt(u ** 2 + v ** 2)
    r_max = max(np.hypot(corner_u - center_u, corner_v - center_v)
                for corner_u in (0, height - 1) for corner_v in (0, width - 1))
    if r_max == 0:
        return np.zeros((height, width))
    return distance / r_max


class FrequencyMask(Module):
    """
    Learnable H x W mask M; sigmoid(M) multiplies the centred spectrum. The initial values are kept as a buffer.
    """
    def __init__(self, values: np.ndarray, branch: BranchEnum, alpha: float) -> None:
        self.branch = BranchEnum(branch)
        self.alpha = alpha
        self.weight = Parameter(np.array(values, copy=True))
        self.initial = Buffer(np.array(values, copy=True))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.weight.shape

    def gate(self) -> np.ndarray:
        """
        Current sigmoid(M).
        """
        return 1.0 / (1.0 + np.exp(-self.weight.data.astype(np.float64)))

    def difference(self) -> np.ndarray:
        """
        M_learned - M_init.
        """
        return self.weight.data - self.initial.data


def init_masks(distance: np.ndarray, alpha: float) -> Tuple[FrequencyMask, FrequencyMask]:
    """
    M_high = alpha * D + alpha, M_low = alpha * (1 - D) + alpha.
    """
    if alpha <= 0:
        raise ValueError(f'Mask alpha {alpha} is invalid. Should be > 0.')
    high = FrequencyMask(alpha * distance + alpha, BranchEnum.high, alpha)
    low = FrequencyMask(alpha * (1.0 - distance) + alpha, BranchEnum.low, alpha)
    return high, low


class GroupWeights(Module):
    """
    Per-group scalar weights W_freq, initialized to 1.
    """
    def __init__(self, groups: int, branch: BranchEnum) -> None:
        self.branch = BranchEnum(branch)
        self.weight = Parameter(np.ones(groups))

    def __len__(self) -> int:
        return self.weight.shape[0]


def mask_spectrum(features: Tensor, mask: Union[FrequencyMask, Tensor]) -> ComplexTensor:
    """
    fftshift(fft2(F)) * sigmoid(M); one mask shared over batch and channels.
    """
    weight = mask.weight if isinstance(mask, FrequencyMask) else mask
    if features.ndim != 4 or tuple(weight.shape) != tuple(features.shape[-2:]):
        raise ShapeError('mask_spectrum', f'features [B,C,{weight.shape[0]},{weight.shape[1]}]', features.shape)
    return fftshift(fft2(features)) * sigmoid(weight)


def group_energy(spectrum: Tensor, groups: int, energy_norm: bool = True) -> Tensor:
    """
    E[b,g] = sum of |spectrum| over the g-th channel block and all frequencies; divided by H*W*C/G when normalized.
    """
    batch, channels, height, width = spectrum.shape
    if groups < 1 or channels % groups:
        raise ValueError(f'Groups {groups} is invalid. Should divide channels {channels}.')
    per_group = channels // groups
    energy = complex_abs(spectrum).reshape(batch, groups, per_group, height, width).sum(axis=(2, 3, 4))
    if energy_norm:
        energy = energy * (1.0 / (height * width * per_group))
    return energy


def recalibrate(features: Tensor, energy: Tensor, weights: Union[GroupWeights, Tensor]) -> Tensor:
    """
    Scales every channel of group g in sample b by ReLU(W[g] * E[b,g]).
    """
    weight = weights.weight if isinstance(weights, GroupWeights) else weights
    batch, channels, height, width = features.shape
    groups = weight.shape[0]
    if energy.shape != (batch, groups) or channels % groups:
        raise ShapeError('recalibrate', f'energy [{batch},{groups}] with {groups} | {channels}', energy.shape)
    gain = relu(energy * weight.reshape(1, groups))
    grouped = features.reshape(batch, groups, channels // groups, height, width)
    return (grouped * gain.reshape(batch, groups, 1, 1, 1)).reshape(batch, channels, height, width)


class LfaBranch(Module):
    """
    Mask + group weights of one branch. The mask is sized from the first input unless `size` is given.
    """
    def __init__(self, cfg: LfaConfig, branch: BranchEnum, size: Optional[Tuple[int, int]] = None) -> None:
        self.cfg = cfg
        self.branch = BranchEnum(branch)
        self.mask: Optional[FrequencyMask] = None
        self.weights = GroupWeights(cfg.groups, self.branch)
        self.last_energy: Optional[np.ndarray] = None
        if size is not None:
            self.materialize(*size)

    def materialize(self, height: int, width: int) -> None:
        high, low = init_masks(distance_matrix(height, width), self.cfg.alpha)
        self.mask = high if self.branch is BranchEnum.high else low
        logger.debug('lfa branch=%s mask_size=%dx%d', self.branch.value, height, width)

    def forward(self, features: Tensor, bypass: bool = False) -> Tensor:
        if bypass:
            self.last_energy = None
            return features
        if self.mask is None:
            self.materialize(*features.shape[-2:])
        energy = group_energy(mask_spectrum(features, self.mask), self.cfg.groups, self.cfg.energy_norm)
        self.last_energy = np.array(energy.data, copy=True)
        return recalibrate(features, energy, self.weights)


class LfaModule(Module):
    """
    Rich features go through (M_high, W_high), poor features through (M_low, W_low). No parameters are shared.
    """
    def __init__(self, cfg: LfaConfig = LfaConfig(), size: Optional[Tuple[int, int]] = None) -> None:
        self.cfg = cfg
        self.high = LfaBranch(cfg, BranchEnum.high, size)
        self.low = LfaBranch(cfg, BranchEnum.low, size)

    def forward(self, rich: Tensor, poor: Tensor,
                ablation: AblationEnum = AblationEnum.full) -> Tuple[Tensor, Tensor]:
        ablation = AblationEnum(ablation)
        return self.high(rich, bypass=ablation.bypass_high), self.low(poor, bypass=ablation.bypass_low)

    def energies(self) -> Dict[str, Optional[np.ndarray]]:
        return {BranchEnum.high.value: self.high.last_energy, BranchEnum.low.value: self.low.last_energy}


def lfa_forward(rich: Tensor, poor: Tensor, state: LfaModule,
                ablation: AblationEnum = AblationEnum.full) -> Tuple[Tensor, Tensor]:
    return state(rich, poor, ablation=ablation)
