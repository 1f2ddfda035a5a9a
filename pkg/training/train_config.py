"""
Run configuration: one TOML file with a section per module, plus `section.key=value` overrides.
"""
import hashlib
import json
import logging
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import toml
from aenum import Enum as AEnum
from pydantic import BaseModel, root_validator, validator

from detector.cascade import CascadeConfig
from detector.constants import AblationEnum
from detector.lfa_attention import LfaConfig
from detector.s2f_net import ModelConfig
from detector.smash_reconstruct import SmashConfig
from detector.srm_residual import SrmConfig
from imaging.constants import DEFAULT_CROP_SIZE
from imaging.image_degrade import AugmentConfig
from training.constants import CONFIG_ENV_VAR, CONFIG_HASH_LENGTH, RUNS_DIR

logger = logging.getLogger(__name__)


class OptimizerConfig(BaseModel):
    lr: float = 1e-4
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    class Config:
        """
        Pydantic config class.
        """
        validate_assignment = True

    @validator('lr', 'eps')
    def check_non_negative(cls, value, field) -> float:
        if value < 0:
            raise ValueError(f'field value {value} is invalid. Should be >= 0.')
        return value

    @validator('beta1', 'beta2')
    def check_beta(cls, value) -> float:
        if value < 0 or value >= 1:
            raise ValueError(f'field value {value} is invalid. Should be in [0, 1) range.')
        return value

    @validator('batch_size')
    def check_batch_size(cls, value) -> int:
        if value < 1:
            raise ValueError(f'field value {value} is invalid. Should be >= 1.')
        return value


class TrainConfig(BaseModel):
    epochs: int = 20
    val_fraction: float = 0.1
    balanced: bool = False
    cache_images: bool = True
    workers: int = 4
    runs_dir: str = RUNS_DIR

    class Config:
        """
        Pydantic config class.
        """
        validate_assignment = True

    @validator('epochs', 'workers')
    def check_positive(cls, value) -> int:
        if value < 1:
            raise ValueError(f'field value {value} is invalid. Should be >= 1.')
        return value

    @validator('val_fraction')
    def check_val_fraction(cls, value) -> float:
        if value < 0 or value >= 1:
            raise ValueError(f'field value {value} is invalid. Should be in [0, 1) range.')
        return value


class PreprocessConfig(BaseModel):
    """
    Size normalization applied right after decoding.
    """
    crop_size: int = DEFAULT_CROP_SIZE
    normalize: bool = True

    class Config:
        """
        Pydantic config class.
        """
        validate_assignment = True

    @validator('crop_size')
    def check_crop_size(cls, value) -> int:
        if value < 1:
            raise ValueError(f'field value {value} is invalid. Should be >= 1.')
        return value


class RunConfig(BaseModel):
    seed: int = 0
    ablation: AblationEnum = AblationEnum.full
    smash: SmashConfig = SmashConfig()
    srm: SrmConfig = SrmConfig()
    lfa: LfaConfig = LfaConfig()
    cascade: CascadeConfig = CascadeConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    augment: AugmentConfig = AugmentConfig()
    train: TrainConfig = TrainConfig()
    preprocess: PreprocessConfig = PreprocessConfig()

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

    @root_validator(skip_on_failure=True)
    def check_sizes(cls, values):
        smash, preprocess = values['smash'], values['preprocess']
        if preprocess.normalize and preprocess.crop_size < smash.patch_size:
            raise ValueError(f'preprocess.crop_size {preprocess.crop_size} is invalid. '
                             f'Should be >= smash.patch_size {smash.patch_size}.')
        return values

    def model_config(self) -> ModelConfig:
        return ModelConfig(view_size=self.smash.view_size, srm=self.srm, lfa=self.lfa, cascade=self.cascade,
                           ablation=self.ablation, seed=self.seed)


def to_plain(value: Any) -> Any:
    """
    Converts configs to JSON/TOML-ready builtins (enums by value, tuples as lists).
    """
    if isinstance(value, BaseModel):
        return {key: to_plain(item) for key, item in value.__dict__.items()}
    if isinstance(value, dict):
        return {key: to_plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(item) for item in value]
    if isinstance(value, (Enum, AEnum)):
        return value.value
    return value


def _digest(data: Dict[str, Any]) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:CONFIG_HASH_LENGTH]


def config_hash(cfg: RunConfig) -> str:
    return _digest(to_plain(cfg))


def model_config_hash(cfg: Union[RunConfig, ModelConfig]) -> str:
    """
    Hash of the shape- and semantics-relevant settings; stored in checkpoints.
    """
    model_cfg = cfg.model_config() if isinstance(cfg, RunConfig) else cfg
    plain = to_plain(model_cfg)
    # The init seed does not change what a checkpoint holds
    plain.pop('seed', None)
    return _digest(plain)


def _parse_value(text: str) -> Any:
    try:
        return toml.loads(f'value = {text}')['value']
    except toml.TomlDecodeError:
        return text


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """
    Applies `section.key=value` (or `key=value` for top-level keys); values are TOML literals, bare words are
    taken as strings.
    """
    for override in overrides:
        key, separator, text = override.partition('=')
        if not separator or not key.strip():
            raise ValueError(f'Override "{override}" is invalid. Should be section.key=value.')
        *sections, name = key.strip().split('.')
        target = data
        for section in sections:
            target = target.setdefault(section, {})
            if not isinstance(target, dict):
                raise ValueError(f'Override "{override}" is invalid. "{section}" is not a section.')
        target[name] = _parse_value(text.strip())
    return data


def load_run_config(path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = ()) -> RunConfig:
    """
    Reads the run config from `path`, else from $S2F_CONFIG, else uses the defaults; then applies overrides.
    """
    path = path or os.environ.get(CONFIG_ENV_VAR)
    data: Dict[str, Any] = {}
    if path:
        data = toml.load(Path(path))
        logger.debug('config path=%s', path)
    cfg = RunConfig.parse_obj(apply_overrides(data, overrides))
    logger.debug('config hash=%s', config_hash(cfg))
    return cfg


def dump_run_config(cfg: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as file:
        toml.dump(to_plain(cfg), file)
    return path
