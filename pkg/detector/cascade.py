from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, validator

from detector.constants import FEATURE_CHANNELS
from tensor.tensor_core import ShapeError, Tensor
from tensor.tensor_nn import ConvBnReLU, Linear, Module
from tensor.tensor_ops import adaptive_avgpool, avgpool2d, bce_with_logits, concat, stable_sigmoid


class CascadeConfig(BaseModel):
    """
    Conv-BN-ReLU stages separated by 2x2 average pools, then global average pooling and one logit.
    The default (4, 2, 2, 2) stages give Conv(64->32), Conv(32->32) x3, pool, x2, pool, x2, pool, x2.
    """
    kernel_size: int = 3
    stages: Tuple[int, ...] = (4, 2, 2, 2)
    in_channels: int = 2 * FEATURE_CHANNELS
    channels: int = FEATURE_CHANNELS

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

    @validator('stages')
    def check_stages(cls, value) -> Tuple[int, ...]:
        if not value or any(count < 1 for count in value):
            raise ValueError(f'field value {value} is invalid. Should be a non-empty list of positive counts.')
        return tuple(value)

    @property
    def min_input_size(self) -> int:
        return 2 ** (len(self.stages) - 1)


class Prediction(NamedTuple):
    logit: float
    prob: float
    label_hat: bool


def to_predictions(logits: Union[Tensor, np.ndarray]) -> List[Prediction]:
    values = np.asarray(logits.data if isinstance(logits, Tensor) else logits, dtype=np.float64).reshape(-1)
    probs = stable_sigmoid(values)
    return [Prediction(logit=float(logit), prob=float(prob), label_hat=bool(prob >= 0.5))
            for logit, prob in zip(values, probs)]


def fuse(rich: Tensor, poor: Tensor) -> Tensor:
    """
    Channels [0, 32) come from the rich branch, [32, 64) from the poor branch.
    """
    if rich.ndim != 4 or rich.shape != poor.shape or rich.shape[1] != FEATURE_CHANNELS:
        raise ShapeError('fuse', f'two [B,{FEATURE_CHANNELS},H,W] tensors of equal shape',
                         (rich.shape, poor.shape))
    return concat([rich, poor], axis=1)


class CascadeStage(Module):
    def __init__(self, in_channels: int, channels: int, count: int, kernel_size: int,
                 rng: Optional[np.random.Generator] = None) -> None:
        self.blocks = [ConvBnReLU(in_channels if index == 0 else channels, channels, kernel_size, rng=rng)
                       for index in range(count)]

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x


class CascadedDiscriminator(Module):
    def __init__(self, cfg: CascadeConfig = CascadeConfig(), rng: Optional[np.random.Generator] = None) -> None:
        self.cfg = cfg
        self.stages = [CascadeStage(cfg.in_channels if index == 0 else cfg.channels, cfg.channels, count,
                                    cfg.kernel_size, rng=rng)
                       for index, count in enumerate(cfg.stages)]
        self.fc = Linear(cfg.channels, 1, rng=rng)
        self.last_features: Optional[np.ndarray] = None

    def features(self, fused: Tensor) -> Tensor:
        """
        Penultimate [B,32] vector (global average pool output).
        """
        if fused.ndim != 4 or fused.shape[1] != self.cfg.in_channels:
            raise ShapeError('discriminate', f'[B,{self.cfg.in_channels},H,W]', fused.shape)
        x = fused
        for index, stage in enumerate(self.stages):
            x = stage(x)
            if index < len(self.stages) - 1:
                if x.shape[2] < 2 or x.shape[3] < 2:
                    raise ShapeError(f'avgpool{index + 1}', 'H,W >= 2', x.shape[2:],
                                     detail=f'input must be at least {self.cfg.min_input_size}x'
                                            f'{self.cfg.min_input_size}')
                x = avgpool2d(x, 2, 2)
        pooled = adaptive_avgpool(x).reshape(x.shape[0], self.cfg.channels)
        self.last_features = np.array(pooled.data, copy=True)
        return pooled

    def forward(self, fused: Tensor) -> Tensor:
        return self.fc(self.features(fused))


def discriminate(fused: Tensor, model: CascadedDiscriminator) -> Tensor:
    """
    Returns one logit per sample, shape [B,1].
    """
    return model(fused)


def bce_loss(logits: Tensor, labels: Union[Sequence[int], np.ndarray]) -> Tensor:
    """
    Mean binary cross-entropy; label 1 is fake.
    """
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if labels.size != logits.size:
        raise ShapeError('bce_loss', f'{logits.size} labels', labels.size)
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError(f'Labels {np.unique(labels).tolist()} are invalid. Should be 0 (real) or 1 (fake).')
    return bce_with_logits(logits, labels)
