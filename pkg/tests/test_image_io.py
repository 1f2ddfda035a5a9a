import numpy as np
import pytest
from PIL import Image
from pydantic import ValidationError

from imaging.image_io import (
    ImageLoadError,
    ImageU8,
    list_images,
    load_image,
    normalize_size,
    round_to_u8,
    save_png,
    to_grayscale,
    to_tensor,
)


def test_round_to_u8_rounds_half_up_and_clips():
    result = round_to_u8(np.array([0.5, 1.49, 254.5, -3.0, 300.0, 2.5]))
    np.testing.assert_array_equal(result, [1, 1, 255, 0, 255, 3])
    assert result.dtype == np.uint8


def test_png_save_and_load_is_lossless(tmp_path, noise_image):
    path = save_png(noise_image, tmp_path / 'nested' / 'image.png')
    np.testing.assert_array_equal(load_image(path).data, noise_image.data)


def test_grayscale_and_alpha_files_become_rgb(tmp_path):
    Image.fromarray(np.full((5, 7), 40, dtype=np.uint8)).save(tmp_path / 'gray.png')
    Image.fromarray(np.full((5, 7, 4), 200, dtype=np.uint8)).save(tmp_path / 'alpha.png')
    gray = load_image(tmp_path / 'gray.png')
    alpha = load_image(tmp_path / 'alpha.png')
    assert gray.data.shape == (5, 7, 3)
    assert np.all(gray.data == 40)
    assert alpha.data.shape == (5, 7, 3)


def test_load_errors_carry_path(tmp_path):
    with pytest.raises(ImageLoadError) as error:
        load_image(tmp_path / 'missing.png')
    assert error.value.path.endswith('missing.png')
    broken = tmp_path / 'broken.png'
    broken.write_bytes(b'not an image at all')
    with pytest.raises(ImageLoadError):
        load_image(broken)


def test_image_model_rejects_bad_arrays():
    with pytest.raises(ValidationError):
        ImageU8(data=np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(ValidationError):
        ImageU8(data=np.zeros((4, 4, 3), dtype=np.float32))


def test_to_tensor_scales_to_unit_range(constant_image):
    tensor = to_tensor(ImageU8(data=np.full((2, 3, 3), 255, dtype=np.uint8)))
    assert tensor.shape == (1, 3, 2, 3)
    np.testing.assert_allclose(tensor.data, 1.0)
    assert to_tensor(constant_image).data[0, 1, 0, 0] == pytest.approx(128 / 255)


def test_to_grayscale_is_rounded_rgb_mean():
    data = np.array([[[1, 2, 2], [0, 0, 1], [10, 20, 31]]], dtype=np.uint8)
    np.testing.assert_array_equal(to_grayscale(ImageU8(data=data)), [[2, 0, 20]])


def test_normalize_size_resizes_short_side_and_crops(noise_image):
    wide = ImageU8(data=np.zeros((40, 80, 3), dtype=np.uint8))
    assert normalize_size(wide, 32).data.shape == (32, 32, 3)
    np.testing.assert_array_equal(normalize_size(noise_image, 64).data, noise_image.data)
    cropped = normalize_size(ImageU8(data=np.zeros((64, 70, 3), dtype=np.uint8)), 64)
    assert cropped.data.shape == (64, 64, 3)
    with pytest.raises(ValueError):
        normalize_size(noise_image, 0)


def test_list_images_sorted_and_filtered(image_dir, tmp_path):
    assert [path.name for path in list_images(image_dir)] == ['a_noise.png', 'b_constant.png']
    (tmp_path / 'empty').mkdir()
    with pytest.raises(ValueError):
        list_images(tmp_path / 'empty')
    with pytest.raises(FileNotFoundError):
        list_images(tmp_path / 'nowhere')
