"""
Binary checkpoint container.

Layout (little-endian):
    magic b'S2FNCKPT' | version u16 | precision code u8 | model hash (12 ascii bytes)
    | config JSON length u32 | config JSON | record count u32
    | records: name length u16, name utf-8, ndim u8, dims u32 x ndim, raw scalars
    | sha256 of everything above (32 bytes)
A `.json` sidecar lists record names, shapes, precision and the trainable parameter count.
"""
import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, NamedTuple, Optional, Tuple, Union

import numpy as np

from detector.s2f_net import ModelConfig, S2FNet
from tensor.constants import PrecisionEnum
from tensor.tensor_core import use_precision
from training.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION, CONFIG_HASH_LENGTH
from training.train_config import RunConfig, model_config_hash, to_plain

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
_DIGEST_SIZE = 32


class CheckpointError(ValueError):
    """
    Version mismatch, corrupt payload, tampered header or config hash mismatch.
    """
    def __init__(self, path: PathLike, reason: str) -> None:
        self.path = str(path)
        super().__init__(f'Checkpoint "{path}": {reason}')


class Checkpoint(NamedTuple):
    model: S2FNet
    model_config: ModelConfig
    model_hash: str
    meta: Dict[str, Any]


def _encode(model: S2FNet, meta: Dict[str, Any]) -> bytes:
    precision = model.precision
    model_hash = model_config_hash(model.cfg)
    config_json = json.dumps({'model': to_plain(model.cfg), 'meta': meta}, sort_keys=True).encode('utf-8')
    state = model.state_dict()
    parts = [CHECKPOINT_MAGIC, struct.pack('<HB', CHECKPOINT_VERSION, precision.code),
             model_hash.encode('ascii'), struct.pack('<I', len(config_json)), config_json,
             struct.pack('<I', len(state))]
    little_endian = np.dtype(precision.real_dtype).newbyteorder('<')
    for name, array in state.items():
        encoded_name = name.encode('utf-8')
        parts.append(struct.pack('<H', len(encoded_name)))
        parts.append(encoded_name)
        parts.append(struct.pack('<B', array.ndim))
        parts.append(struct.pack(f'<{array.ndim}I', *array.shape))
        parts.append(np.ascontiguousarray(array, dtype=little_endian).tobytes())
    body = b''.join(parts)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(model: S2FNet, path: PathLike, meta: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = meta or {}
    path.write_bytes(_encode(model, meta))
    sidecar = {
        'format_version': CHECKPOINT_VERSION,
        'precision': model.precision.value,
        'model_hash': model_config_hash(model.cfg),
        'trainable_parameters': model.parameter_count(),
        'records': [{'name': name, 'shape': list(array.shape)} for name, array in model.state_dict().items()],
        'meta': meta,
    }
    path.with_suffix('.json').write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    logger.debug('checkpoint saved path=%s', path)
    return path


class _Reader:
    def __init__(self, data: bytes, path: PathLike) -> None:
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(self.path, 'truncated payload')
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: PathLike, expected_hash: Optional[str] = None) -> Checkpoint:
    """
    Verifies and decodes a checkpoint. `expected_hash` is the model config hash of the caller's run config.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(CHECKPOINT_MAGIC) + _DIGEST_SIZE or not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(path, 'not a checkpoint file')
    reader = _Reader(data[:-_DIGEST_SIZE], path)
    reader.take(len(CHECKPOINT_MAGIC))
    version, precision_code = reader.unpack('<HB')
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(path, f'version {version} is not supported. Should be {CHECKPOINT_VERSION}.')
    if hashlib.sha256(data[:-_DIGEST_SIZE]).digest() != data[-_DIGEST_SIZE:]:
        raise CheckpointError(path, 'checksum mismatch (corrupt or tampered file)')
    try:
        precision = PrecisionEnum.from_code(precision_code)
        model_hash = reader.take(CONFIG_HASH_LENGTH).decode('ascii')
        (config_size,) = reader.unpack('<I')
        config = json.loads(reader.take(config_size).decode('utf-8'))
        model_cfg = ModelConfig.parse_obj(config['model'])
    except (ValueError, KeyError, UnicodeDecodeError) as error:
        if isinstance(error, CheckpointError):
            raise
        raise CheckpointError(path, f'invalid header ({error})') from error
    if model_config_hash(model_cfg) != model_hash:
        raise CheckpointError(path, 'header hash does not match the stored config')
    if expected_hash is not None and expected_hash != model_hash:
        raise CheckpointError(path, f'config hash {model_hash} does not match run config hash {expected_hash}')
    (count,) = reader.unpack('<I')
    little_endian = np.dtype(precision.real_dtype).newbyteorder('<')
    state = {}
    for _ in range(count):
        (name_size,) = reader.unpack('<H')
        name = reader.take(name_size).decode('utf-8')
        (ndim,) = reader.unpack('<B')
        shape = reader.unpack(f'<{ndim}I')
        payload = reader.take(int(np.prod(shape, dtype=np.int64)) * precision.code)
        state[name] = np.frombuffer(payload, dtype=little_endian).reshape(shape).astype(precision.real_dtype)
    if reader.offset != len(reader.data):
        raise CheckpointError(path, 'trailing bytes after the last record')
    with use_precision(precision):
        model = S2FNet(model_cfg)
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as error:
        raise CheckpointError(path, f'records do not match the model ({error})') from error
    logger.debug('checkpoint loaded path=%s hash=%s precision=%s', path, model_hash, precision.value)
    return Checkpoint(model=model, model_config=model_cfg, model_hash=model_hash, meta=config.get('meta', {}))


def load_run_model(path: PathLike, cfg: Union[RunConfig, ModelConfig]) -> S2FNet:
    """
    Loads a checkpoint that must match the model settings of `cfg`.
    """
    return load_checkpoint(path, expected_hash=model_config_hash(cfg)).model
