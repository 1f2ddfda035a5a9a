import numpy as np
import pytest
from pydantic import ValidationError

from detector.cascade import (
    CascadeConfig,
    CascadedDiscriminator,
    bce_loss,
    discriminate,
    fuse,
    to_predictions,
)
from tensor.tensor_core import ShapeError, Tensor


def test_fuse_puts_rich_channels_first(float64):
    rich = Tensor(np.zeros((2, 32, 4, 4)))
    poor = Tensor(np.ones((2, 32, 4, 4)))
    fused = fuse(rich, poor).data
    assert fused.shape == (2, 64, 4, 4)
    assert np.all(fused[:, :32] == 0) and np.all(fused[:, 32:] == 1)
    with pytest.raises(ShapeError):
        fuse(rich, Tensor(np.ones((2, 32, 4, 2))))
    with pytest.raises(ShapeError):
        fuse(Tensor(np.zeros((2, 16, 4, 4))), Tensor(np.zeros((2, 16, 4, 4))))


def test_default_discriminator_parameter_count():
    model = CascadedDiscriminator(CascadeConfig(), rng=np.random.default_rng(0))
    # 64->32 block, nine 32->32 blocks, fc 32->1
    assert model.parameter_count() == (64 * 32 * 9 + 64) + 9 * (32 * 32 * 9 + 64) + 33
    assert CascadeConfig().min_input_size == 8


def test_discriminator_outputs_one_logit_per_sample(float64):
    model = CascadedDiscriminator(rng=np.random.default_rng(1))
    fused = Tensor(np.random.default_rng(2).normal(size=(3, 64, 16, 16)))
    logits = discriminate(fused, model)
    assert logits.shape == (3, 1)
    assert model.last_features.shape == (3, 32)
    assert np.all(model.last_features >= 0)


def test_discriminator_accepts_minimum_size_and_rejects_smaller(float64):
    model = CascadedDiscriminator(rng=np.random.default_rng(1))
    assert model(Tensor(np.random.default_rng(3).normal(size=(2, 64, 8, 8)))).shape == (2, 1)
    with pytest.raises(ShapeError) as error:
        model(Tensor(np.zeros((2, 64, 4, 4))))
    assert '8x8' in str(error.value)
    with pytest.raises(ShapeError):
        model(Tensor(np.zeros((2, 32, 8, 8))))


def test_predictions_threshold_at_half():
    predictions = to_predictions(np.array([[0.0], [-1000.0], [2.0]]))
    assert predictions[0].prob == 0.5 and predictions[0].label_hat
    assert predictions[1].prob == 0.0 and not predictions[1].label_hat
    assert predictions[2].prob == pytest.approx(1 / (1 + np.exp(-2.0)))


def test_bce_loss_reference_and_validation(float64):
    logits = Tensor(np.array([[0.3], [-1.2], [2.0]]))
    labels = [1, 0, 0]
    expected = np.mean([np.log1p(np.exp(-0.3)), np.log1p(np.exp(-1.2)), np.log1p(np.exp(2.0))])
    assert bce_loss(logits, labels).item() == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ShapeError):
        bce_loss(logits, [1, 0])
    with pytest.raises(ValueError):
        bce_loss(logits, [1, 0, 2])


def test_discriminator_gradients(float64, grad_check):
    rng = np.random.default_rng(5)
    model = CascadedDiscriminator(CascadeConfig(stages=(1, 1)), rng=rng)
    fused = Tensor(rng.normal(size=(3, 64, 4, 4)), requires_grad=True)

    def loss():
        return bce_loss(model(fused), [1, 0, 1])

    assert grad_check(loss, [fused, model.fc.weight], count=3) < 1e-4


def test_cascade_config_validation():
    with pytest.raises(ValidationError):
        CascadeConfig(kernel_size=4)
    with pytest.raises(ValidationError):
        CascadeConfig(stages=())
    with pytest.raises(ValidationError):
        CascadeConfig(stages=(2, 0))
