from typing import Callable, Sequence

import numpy as np
import pytest
from pytest import fixture

from detector.cascade import CascadeConfig
from detector.lfa_attention import LfaConfig
from detector.s2f_net import ModelConfig
from detector.smash_reconstruct import SmashConfig
from imaging.image_io import ImageU8, save_png
from tensor.constants import PrecisionEnum
from tensor.tensor_core import Tensor, backward, no_grad, reset_tape, set_debug_checks, use_precision
from training.toy_dataset import ToyConfig, generate_toy_dataset
from training.train_config import RunConfig


def pytest_addoption(parser):
    parser.addoption('--run-slow', action='store_true', default=False,
                     help='Run the slow end-to-end toy experiment')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: end-to-end toy experiment, needs --run-slow')
    set_debug_checks(True)


def pytest_collection_modifyitems(config, items):
    if config.getoption('--run-slow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --run-slow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@fixture(autouse=True)
def clean_tape():
    reset_tape()
    yield
    reset_tape()


@fixture
def float64():
    with use_precision(PrecisionEnum.float64) as precision:
        yield precision


def _max_relative_error(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = 1e-5,
                        count: int = 0, sample: int = 0, seed: int = 0) -> float:
    """
    Worst |analytic - numeric| / max(|analytic|, |numeric|, 1e-6) over the checked entries.
    `count` > 0 checks only the entries with the largest analytic gradients, `sample` > 0 adds that many
    randomly drawn entries per tensor.
    """
    rng = np.random.default_rng(seed)
    reset_tape()
    for tensor in tensors:
        tensor.grad = None
    backward(loss_fn())
    worst = 0.0
    for tensor in tensors:
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        flat = analytic.reshape(-1)
        if count or sample:
            picks = list(np.argsort(-np.abs(flat), kind='stable')[:count])
            picks += list(rng.choice(flat.size, size=min(sample, flat.size), replace=False))
        else:
            picks = range(flat.size)
        for index in picks:
            position = np.unravel_index(int(index), tensor.shape)
            original = tensor.data[position]
            tensor.data[position] = original + h
            with no_grad():
                plus = loss_fn().item()
            tensor.data[position] = original - h
            with no_grad():
                minus = loss_fn().item()
            tensor.data[position] = original
            numeric = (plus - minus) / (2 * h)
            value = float(flat[int(index)])
            worst = max(worst, abs(value - numeric) / max(abs(value), abs(numeric), 1e-6))
    return worst


@fixture
def grad_check():
    return _max_relative_error


@fixture
def tiny_smash_config():
    # 64x64 images, 8x8 patches, 4x4 grid of patches per view
    return SmashConfig(patch_size=8, patch_count=48, select_ratio=33, view_size=32, seed=0)


@fixture
def tiny_model_config():
    return ModelConfig(view_size=32, lfa=LfaConfig(groups=8), cascade=CascadeConfig(), seed=0)


@fixture
def tiny_run_config(tiny_smash_config):
    return RunConfig.parse_obj({
        'seed': 0,
        'smash': tiny_smash_config.dict(),
        'optimizer': {'lr': 1e-3, 'batch_size': 4},
        'train': {'epochs': 1, 'val_fraction': 0.25, 'workers': 2},
        'preprocess': {'crop_size': 64},
    })


@fixture
def noise_image():
    rng = np.random.default_rng(7)
    return ImageU8(data=rng.integers(0, 256, (64, 64, 3), dtype=np.uint8))


@fixture
def constant_image():
    return ImageU8(data=np.full((64, 64, 3), 128, dtype=np.uint8))


@fixture
def half_noise_image():
    # Left half noise, right half constant
    rng = np.random.default_rng(3)
    data = np.full((64, 64, 3), 90, dtype=np.uint8)
    data[:, :32] = rng.integers(0, 256, (64, 32, 3), dtype=np.uint8)
    return ImageU8(data=data)


@fixture
def image_dir(tmp_path, noise_image, constant_image):
    directory = tmp_path / 'images'
    save_png(noise_image, directory / 'a_noise.png')
    save_png(constant_image, directory / 'b_constant.png')
    (directory / 'notes.txt').write_text('not an image')
    return directory


@fixture
def toy_manifest(tmp_path):
    return generate_toy_dataset(tmp_path / 'toy', ToyConfig(count=6, size=64, seed=0))
