from enum import IntEnum
from typing import Dict


class LabelEnum(IntEnum):
    """
    Image label; generated images are the positive class.
    """
    real = 0
    fake = 1

    @classmethod
    def has_value(cls, value) -> bool:
        return value in cls._value2member_map_

    @classmethod
    def dict(cls) -> Dict[str, int]:
        return {item.name: item.value for item in cls}

    @classmethod
    def from_text(cls, text: str) -> 'LabelEnum':
        """
        Accepts `real` / `fake` or `0` / `1`.
        """
        text = str(text).strip().lower()
        if text in cls.__members__:
            return cls[text]
        if text.isdigit() and cls.has_value(int(text)):
            return cls(int(text))
        raise ValueError(f'label "{text}" is invalid. Should be one of {list(cls.dict())}.')


# Environment variable holding the run config path
CONFIG_ENV_VAR = 'S2F_CONFIG'
# Root of run directories `<UTC timestamp>-<config hash>`
RUNS_DIR = 'runs'
CONFIG_HASH_LENGTH = 12

CHECKPOINT_MAGIC = b'S2FNCKPT'
CHECKPOINT_VERSION = 1

MANIFEST_COLUMNS = ('path', 'label', 'source')
# Threshold on P(fake) for ACC
DECISION_THRESHOLD = 0.5
