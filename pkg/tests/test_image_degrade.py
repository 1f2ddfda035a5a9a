import numpy as np
import pytest
from pydantic import ValidationError

from imaging.constants import AugmentKindEnum, DegradeKindEnum
from imaging.image_degrade import (
    AugmentConfig,
    DegradeSpec,
    apply_degradation,
    augment,
    augment_with_kind,
    downsample_bilinear,
    gaussian_blur,
    gaussian_kernel,
    jpeg_reencode,
    robustness_specs,
)
from imaging.image_io import ImageU8


def test_degrade_spec_from_text_accepts_aliases():
    jpeg = DegradeSpec.from_text('jpeg:95')
    blur = DegradeSpec.from_text('blur:1.0')
    down = DegradeSpec.from_text('resize:0.5')
    assert (jpeg.kind, jpeg.qf, jpeg.tag) == (DegradeKindEnum.jpeg, 95, 'jpeg_q95')
    assert (blur.kind, blur.sigma, blur.tag) == (DegradeKindEnum.gaussian_blur, 1.0, 'blur_s1')
    assert (down.kind, down.r, down.tag) == (DegradeKindEnum.downsample, 0.5, 'downsample_r0.5')
    with pytest.raises(ValueError):
        DegradeSpec.from_text('sharpen:2')
    with pytest.raises(ValidationError):
        DegradeSpec.from_text('jpeg:101')


def test_robustness_specs_values():
    assert [spec.value for spec in robustness_specs()] == [95, 1.0, 0.5]


def test_gaussian_kernel_radius_and_normalization():
    kernel = gaussian_kernel(1.0)
    assert kernel.size == 7
    assert kernel.sum() == pytest.approx(1.0)
    assert kernel[3] == kernel.max()
    assert gaussian_kernel(0.4).size == 5


def test_gaussian_blur_identity_cases(noise_image, constant_image):
    np.testing.assert_array_equal(gaussian_blur(noise_image, 0.0).data, noise_image.data)
    np.testing.assert_array_equal(gaussian_blur(constant_image, 2.0).data, constant_image.data)
    assert gaussian_blur(noise_image, 1.0).data.std() < noise_image.data.std()
    with pytest.raises(ValueError):
        gaussian_blur(noise_image, -1.0)


def test_downsample_bilinear_sizes_and_constants(noise_image, constant_image):
    assert downsample_bilinear(noise_image, 0.5).data.shape == (32, 32, 3)
    np.testing.assert_array_equal(downsample_bilinear(noise_image, 1.0).data, noise_image.data)
    np.testing.assert_array_equal(downsample_bilinear(constant_image, 0.5).data, 128)
    with pytest.raises(ValueError):
        downsample_bilinear(noise_image, 0.0)
    with pytest.raises(ValueError):
        downsample_bilinear(ImageU8(data=np.zeros((1, 1, 3), dtype=np.uint8)), 0.1)


def test_downsample_half_averages_pixel_pairs():
    data = np.zeros((2, 4, 3), dtype=np.uint8)
    data[:, 1::2] = 100
    out = downsample_bilinear(ImageU8(data=data), 0.5).data
    assert out.shape == (1, 2, 3)
    np.testing.assert_array_equal(out, 50)


def test_jpeg_reencode_keeps_shape(constant_image, noise_image):
    assert jpeg_reencode(noise_image, 95).data.shape == noise_image.data.shape
    assert np.abs(jpeg_reencode(constant_image, 95).data.astype(int) - 128).max() <= 2
    with pytest.raises(ValueError):
        jpeg_reencode(noise_image, 0)


def test_apply_degradation_dispatch(noise_image):
    assert apply_degradation(noise_image, None) is noise_image
    down = apply_degradation(noise_image, DegradeSpec(kind='downsample', r=0.5))
    assert down.data.shape == (32, 32, 3)


def test_augment_trigger_probability(noise_image):
    never = AugmentConfig(trigger_prob=0.0)
    always = AugmentConfig(trigger_prob=1.0)
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(augment(noise_image, never, rng).data, noise_image.data)
    kinds = {augment_with_kind(noise_image, always, rng)[1] for _ in range(20)}
    assert kinds == {AugmentKindEnum.jpeg, AugmentKindEnum.gaussian_blur}


def test_augment_is_deterministic_per_generator(noise_image):
    cfg = AugmentConfig(trigger_prob=1.0)
    first = augment(noise_image, cfg, np.random.default_rng(11)).data
    second = augment(noise_image, cfg, np.random.default_rng(11)).data
    np.testing.assert_array_equal(first, second)


def test_augment_config_validation():
    with pytest.raises(ValidationError):
        AugmentConfig(trigger_prob=1.5)
    with pytest.raises(ValidationError):
        AugmentConfig(jpeg_q_range=(90, 70))
    with pytest.raises(ValidationError):
        AugmentConfig(blur_sigma_range=(-1.0, 1.0))


def _smooth_image(size=32):
    rows, cols = np.mgrid[0:size, 0:size]
    data = np.stack([rows * 3 + cols, 200 - rows * 2, 60 + cols * 4], axis=-1)
    return ImageU8(data=data.astype(np.uint8))


def _psnr(first, second):
    mse = np.mean((first.astype(np.float64) - second.astype(np.float64)) ** 2)
    return float('inf') if mse == 0 else 10 * np.log10(255.0 ** 2 / mse)


def test_jpeg_high_quality_is_close_and_near_idempotent():
    image = _smooth_image()
    once = jpeg_reencode(image, 100)
    assert _psnr(image.data, once.data) > 40
    first = jpeg_reencode(image, 95)
    second = jpeg_reencode(first, 95)
    assert np.abs(first.data.astype(int) - second.data.astype(int)).mean() < 1.0


def test_blur_of_single_bright_pixel_is_the_2d_kernel():
    data = np.zeros((15, 15, 3), dtype=np.uint8)
    data[7, 7] = 255
    out = gaussian_blur(ImageU8(data=data), 1.0).data.astype(int)
    kernel = gaussian_kernel(1.0)
    expected = np.zeros((15, 15))
    expected[4:11, 4:11] = 255.0 * np.outer(kernel, kernel)
    expected = np.floor(expected + 0.5).astype(int)
    for channel in range(3):
        assert np.abs(out[:, :, channel] - expected).max() <= 1
    assert out[7, 7, 0] == expected[7, 7]
    assert out[0].sum() == 0 and out[:, 0].sum() == 0


def _bilinear_reference(data, r):
    height, width = data.shape[:2]
    out_h, out_w = int(np.floor(height * r + 0.5)), int(np.floor(width * r + 0.5))
    out = np.zeros((out_h, out_w, data.shape[2]))
    for i in range(out_h):
        sy = min(max((i + 0.5) / r - 0.5, 0), height - 1)
        y0 = int(np.floor(sy))
        y1, wy = min(y0 + 1, height - 1), sy - y0
        for j in range(out_w):
            sx = min(max((j + 0.5) / r - 0.5, 0), width - 1)
            x0 = int(np.floor(sx))
            x1, wx = min(x0 + 1, width - 1), sx - x0
            top = data[y0, x0] * (1 - wy) + data[y1, x0] * wy
            bottom = data[y0, x1] * (1 - wy) + data[y1, x1] * wy
            out[i, j] = top * (1 - wx) + bottom * wx
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def test_downsample_matches_half_pixel_formula():
    data = np.random.default_rng(12).integers(0, 256, (8, 8, 3), dtype=np.uint8)
    for r in (0.5, 0.75):
        out = downsample_bilinear(ImageU8(data=data), r).data
        np.testing.assert_array_equal(out, _bilinear_reference(data.astype(np.float64), r))


def test_augment_trigger_rate_and_exclusive_choice():
    image = ImageU8(data=np.random.default_rng(13).integers(0, 256, (8, 8, 3), dtype=np.uint8))
    cfg = AugmentConfig()
    rng = np.random.default_rng(14)
    kinds = [augment_with_kind(image, cfg, rng)[1] for _ in range(10000)]
    triggered = sum(kind is not AugmentKindEnum.none for kind in kinds)
    # 10000 trials at p=0.1: mean 1000, std 30
    assert 880 <= triggered <= 1120
    assert kinds.count(AugmentKindEnum.jpeg) + kinds.count(AugmentKindEnum.gaussian_blur) == triggered
    assert kinds.count(AugmentKindEnum.jpeg) > 0 and kinds.count(AugmentKindEnum.gaussian_blur) > 0


def test_augment_config_carries_no_seed_of_its_own():
    assert 'seed' not in AugmentConfig.__fields__
    assert 'seed' not in AugmentConfig.parse_obj({'seed': 5}).dict()
