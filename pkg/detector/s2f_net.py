"""
The full detector: SRM residuals and encoders per view, frequency attention, fusion and the cascaded discriminator.
"""
import logging
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, validator

from detector.cascade import CascadeConfig, CascadedDiscriminator, Prediction, fuse, to_predictions
from detector.constants import AblationEnum
from detector.lfa_attention import LfaConfig, LfaModule
from detector.srm_residual import SrmConfig, SrmEncoder, apply_srm, build_filter_bank
from tensor.tensor_core import Tensor, no_grad
from tensor.tensor_nn import Module

logger = logging.getLogger(__name__)


class ModelConfig(BaseModel):
    """
    Every setting that changes parameter shapes or forward semantics.
    """
    view_size: int = 256
    srm: SrmConfig = SrmConfig()
    lfa: LfaConfig = LfaConfig()
    cascade: CascadeConfig = CascadeConfig()
    ablation: AblationEnum = AblationEnum.full
    seed: int = 0

    class Config:
        """
        Pydantic config class.
        """
        validate_assignment = True
        arbitrary_types_allowed = True

    @validator('ablation', pre=True)
    def check_ablation(cls, value) -> AblationEnum:
        if isinstance(value, AblationEnum):
            return value
        if not AblationEnum.has_value(value):
            raise ValueError(f'field value {value} is invalid. Should be one of {AblationEnum.all_values()}.')
        return AblationEnum(value)

    @validator('view_size')
    def check_view_size(cls, value) -> int:
        if value < 1:
            raise ValueError(f'field value {value} is invalid. Should be >= 1.')
        return value


class S2FNet(Module):
    def __init__(self, cfg: ModelConfig = ModelConfig()) -> None:
        rng = np.random.default_rng(cfg.seed)
        if cfg.view_size < cfg.cascade.min_input_size:
            raise ValueError(f'view_size {cfg.view_size} is too small for {len(cfg.cascade.stages) - 1} pools.')
        self.cfg = cfg
        self.ablation = AblationEnum(cfg.ablation)
        self.bank = build_filter_bank()
        self.srm_rich = SrmEncoder(cfg.srm, rng=rng)
        self.srm_poor = SrmEncoder(cfg.srm, rng=rng)
        self.lfa = LfaModule(cfg.lfa, size=(cfg.view_size, cfg.view_size))
        self.cascade = CascadedDiscriminator(cfg.cascade, rng=rng)

    def forward(self, rich: Tensor, poor: Tensor) -> Tensor:
        """
        Returns logits [B,1] for view batches [B,3,S,S].
        """
        features_rich = self.srm_rich(apply_srm(rich, self.bank))
        features_poor = self.srm_poor(apply_srm(poor, self.bank))
        recalibrated_rich, recalibrated_poor = self.lfa(features_rich, features_poor, ablation=self.ablation)
        return self.cascade(fuse(recalibrated_rich, recalibrated_poor))

    def predict(self, rich: Tensor, poor: Tensor) -> List[Prediction]:
        """
        Eval-mode forward without recording the tape; restores the previous mode.
        """
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                return to_predictions(self(rich, poor))
        finally:
            self.train(was_training)

    @property
    def last_features(self) -> Optional[np.ndarray]:
        return self.cascade.last_features

    @property
    def last_energies(self) -> Dict[str, Optional[np.ndarray]]:
        return self.lfa.energies()

    def parameter_groups(self) -> Dict[str, List[str]]:
        """
        Parameter names per trainable group: SRM encoders, the four LFA tensors and the discriminator.
        """
        groups: Dict[str, List[str]] = {'srm_encoder': [], 'm_high': [], 'm_low': [], 'w_high': [], 'w_low': [],
                                        'discriminator': []}
        for name, _ in self.named_parameters():
            if name.startswith('srm_'):
                groups['srm_encoder'].append(name)
            elif name == 'lfa.high.mask.weight':
                groups['m_high'].append(name)
            elif name == 'lfa.low.mask.weight':
                groups['m_low'].append(name)
            elif name == 'lfa.high.weights.weight':
                groups['w_high'].append(name)
            elif name == 'lfa.low.weights.weight':
                groups['w_low'].append(name)
            else:
                groups['discriminator'].append(name)
        return groups


def build_model(cfg: ModelConfig = ModelConfig()) -> S2FNet:
    model = S2FNet(cfg)
    logger.info('model view_size=%d groups=%d ablation=%s trainable_parameters=%d', cfg.view_size,
                cfg.lfa.groups, model.ablation.value, model.parameter_count())
    return model
