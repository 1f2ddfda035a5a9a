import numpy as np
import pytest
from pydantic import ValidationError

from detector.cascade import CascadeConfig, bce_loss
from detector.constants import AblationEnum
from detector.lfa_attention import LfaConfig
from detector.s2f_net import ModelConfig, S2FNet, build_model
from detector.srm_residual import SrmConfig
from tensor.tensor_core import Tensor, backward, current_tape


def _views(batch, size, seed=0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.random((batch, 3, size, size))), Tensor(rng.random((batch, 3, size, size)))


def test_default_parameter_count():
    assert build_model(ModelConfig()).parameter_count() == 285105


def test_paper_scale_parameter_count():
    cfg = ModelConfig(srm=SrmConfig(kernel_size=9), cascade=CascadeConfig(kernel_size=7))
    assert S2FNet(cfg).parameter_count() == 1150385


def test_forward_shapes_and_diagnostics(float64, tiny_model_config):
    model = S2FNet(tiny_model_config)
    logits = model(*_views(2, 32))
    assert logits.shape == (2, 1)
    assert model.last_features.shape == (2, 32)
    assert model.last_energies['high'].shape == (2, 8)
    assert model.last_energies['low'].shape == (2, 8)


def test_predict_runs_in_eval_mode_without_tape(float64, tiny_model_config):
    model = S2FNet(tiny_model_config)
    predictions = model.predict(*_views(3, 32))
    assert len(predictions) == 3
    assert all(0.0 <= prediction.prob <= 1.0 for prediction in predictions)
    assert all(prediction.label_hat == (prediction.prob >= 0.5) for prediction in predictions)
    assert len(current_tape()) == 0
    assert model.training
    model.eval()
    model.predict(*_views(1, 32))
    assert not model.training


def test_same_seed_builds_identical_models(tiny_model_config):
    first, second = S2FNet(tiny_model_config).state_dict(), S2FNet(tiny_model_config).state_dict()
    assert list(first) == list(second)
    for name in first:
        np.testing.assert_array_equal(first[name], second[name])


def test_parameter_groups_cover_every_parameter(tiny_model_config):
    model = S2FNet(tiny_model_config)
    groups = model.parameter_groups()
    assert groups['m_high'] == ['lfa.high.mask.weight']
    assert groups['w_low'] == ['lfa.low.weights.weight']
    assert all(name.startswith('cascade.') for name in groups['discriminator'])
    assert sorted(name for names in groups.values() for name in names) == sorted(
        name for name, _ in model.named_parameters())


def test_no_lfa_leaves_frequency_parameters_without_gradient(float64, tiny_model_config):
    model = S2FNet(tiny_model_config.copy(update={'ablation': AblationEnum.no_lfa}))
    backward(bce_loss(model(*_views(2, 32)), [1, 0]))
    params = dict(model.named_parameters())
    for name in ('lfa.high.mask.weight', 'lfa.low.mask.weight', 'lfa.high.weights.weight', 'lfa.low.weights.weight'):
        assert params[name].grad is None or not np.any(params[name].grad)
    assert np.any(params['cascade.fc.weight'].grad)


def test_no_low_bypasses_only_the_poor_branch(float64, tiny_model_config):
    model = S2FNet(tiny_model_config.copy(update={'ablation': AblationEnum.no_low}))
    model(*_views(2, 32))
    assert model.last_energies['low'] is None
    assert model.last_energies['high'] is not None


def test_end_to_end_gradients(float64, grad_check):
    cfg = ModelConfig(view_size=64, lfa=LfaConfig(groups=8), seed=1)
    model = S2FNet(cfg)
    rich, poor = _views(2, 64, seed=2)
    params = dict(model.named_parameters())

    def loss():
        return bce_loss(model(rich, poor), [1, 0])

    groups = model.parameter_groups()
    assert sorted(name for names in groups.values() for name in names) == sorted(params)
    assert any(name.startswith('srm_poor') for name in groups['srm_encoder'])
    for group, names in groups.items():
        tensors = [params[name] for name in names]
        assert grad_check(loss, tensors, count=1, sample=1) < 1e-4, group


def test_model_config_validation():
    assert ModelConfig(ablation='wo_lfa').ablation is AblationEnum.no_lfa
    with pytest.raises(ValidationError):
        ModelConfig(ablation='no_srm')
    with pytest.raises(ValidationError):
        ModelConfig(view_size=0)
    with pytest.raises(ValueError):
        S2FNet(ModelConfig(view_size=4))
