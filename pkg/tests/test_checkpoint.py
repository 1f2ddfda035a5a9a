import json

import numpy as np
import pytest

from detector.lfa_attention import LfaConfig
from detector.s2f_net import S2FNet
from tensor.constants import PrecisionEnum
from training.train_checkpoint import CheckpointError, load_checkpoint, load_run_model, save_checkpoint
from training.train_config import model_config_hash


@pytest.fixture
def checkpoint_path(tmp_path, tiny_model_config):
    model = S2FNet(tiny_model_config)
    model.lfa.high.weights.weight.data[:] = 2.5
    return save_checkpoint(model, tmp_path / 'model.ckpt', meta={'epoch': 3})


def test_save_load_save_is_byte_identical(tmp_path, checkpoint_path):
    checkpoint = load_checkpoint(checkpoint_path)
    again = save_checkpoint(checkpoint.model, tmp_path / 'again.ckpt', meta=checkpoint.meta)
    assert again.read_bytes() == checkpoint_path.read_bytes()
    assert checkpoint.meta == {'epoch': 3}
    np.testing.assert_array_equal(checkpoint.model.lfa.high.weights.weight.data, 2.5)


def test_loaded_state_matches_and_keeps_buffers(checkpoint_path, tiny_model_config):
    original = S2FNet(tiny_model_config)
    original.lfa.high.weights.weight.data[:] = 2.5
    loaded = load_checkpoint(checkpoint_path).model
    assert loaded.precision is PrecisionEnum.float32
    state = loaded.state_dict()
    assert list(state) == list(original.state_dict())
    for name, array in original.state_dict().items():
        np.testing.assert_array_equal(state[name], array)


def test_sidecar_lists_records(checkpoint_path, tiny_model_config):
    sidecar = json.loads(checkpoint_path.with_suffix('.json').read_text())
    assert sidecar['trainable_parameters'] == S2FNet(tiny_model_config).parameter_count()
    assert sidecar['model_hash'] == model_config_hash(tiny_model_config)
    assert sidecar['precision'] == 'float32'
    assert {'name': 'lfa.high.mask.weight', 'shape': [32, 32]} in sidecar['records']


def test_double_precision_checkpoint(tmp_path, float64, tiny_model_config):
    path = save_checkpoint(S2FNet(tiny_model_config), tmp_path / 'model64.ckpt')
    model = load_checkpoint(path).model
    assert model.precision is PrecisionEnum.float64
    assert model.lfa.low.mask.weight.data.dtype == np.float64


def test_tampered_payload_is_rejected(checkpoint_path):
    data = bytearray(checkpoint_path.read_bytes())
    data[len(data) // 2] ^= 0xFF
    checkpoint_path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError) as error:
        load_checkpoint(checkpoint_path)
    assert 'checksum' in str(error.value)


def test_unsupported_version_is_rejected(checkpoint_path):
    data = bytearray(checkpoint_path.read_bytes())
    data[8] = 99
    checkpoint_path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError) as error:
        load_checkpoint(checkpoint_path)
    assert 'version' in str(error.value)


def test_non_checkpoint_file_is_rejected(tmp_path):
    path = tmp_path / 'notes.ckpt'
    path.write_bytes(b'plain text, nothing else in here at all')
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_config_hash_mismatch_is_rejected(checkpoint_path, tiny_model_config):
    other = tiny_model_config.copy(update={'lfa': LfaConfig(groups=16)})
    with pytest.raises(CheckpointError) as error:
        load_run_model(checkpoint_path, other)
    assert 'does not match' in str(error.value)
    reseeded = tiny_model_config.copy(update={'seed': 9})
    assert load_run_model(checkpoint_path, reseeded).cfg.view_size == 32
