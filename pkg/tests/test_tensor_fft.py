import numpy as np
import pytest

from tensor.tensor_core import Tensor, backward
from tensor.tensor_ops import complex_abs, fft2, fftshift, ifft2


def naive_dft2(x):
    height, width = x.shape
    rows = np.exp(-2j * np.pi * np.outer(np.arange(height), np.arange(height)) / height)
    cols = np.exp(-2j * np.pi * np.outer(np.arange(width), np.arange(width)) / width)
    out = np.zeros((height, width), dtype=complex)
    for u in range(height):
        for v in range(width):
            out[u, v] = np.sum(x * rows[u][:, None] * cols[v][None, :])
    return out


def test_fft2_matches_naive_dft(float64):
    rng = np.random.default_rng(0)
    for shape in ((8, 8), (16, 16), (6, 10), (1, 5)):
        x = rng.normal(size=shape)
        np.testing.assert_allclose(fft2(Tensor(x)).data, naive_dft2(x), atol=1e-9)


def test_parseval_and_round_trip(float64):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 3, 12, 16))
    spectrum = fft2(Tensor(x))
    energy = np.sum(np.abs(spectrum.data) ** 2) / (12 * 16)
    assert abs(energy - np.sum(x ** 2)) / np.sum(x ** 2) < 1e-6
    np.testing.assert_allclose(ifft2(spectrum).data.real, x, atol=1e-10)
    np.testing.assert_allclose(ifft2(spectrum).data.imag, 0.0, atol=1e-10)


def test_fftshift_moves_dc_to_center(float64):
    x = np.full((1, 1, 5, 6), 2.0)
    shifted = fftshift(fft2(Tensor(x))).data[0, 0]
    assert shifted[2, 3].real == pytest.approx(60.0, abs=1e-12)
    shifted[2, 3] = 0
    np.testing.assert_allclose(np.abs(shifted), 0.0, atol=1e-12)


def test_spectrum_magnitude_gradients(float64, grad_check):
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(2, 2, 6, 8)), requires_grad=True)
    weights = Tensor(rng.normal(size=(2, 2, 6, 8)))

    def loss():
        return (complex_abs(fftshift(fft2(x))) * weights).sum()

    assert grad_check(loss, [x]) < 1e-4


def test_inverse_transform_gradients(float64, grad_check):
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(1, 2, 5, 4)), requires_grad=True)
    weights = Tensor(rng.normal(size=(1, 2, 5, 4)))

    def loss():
        return (complex_abs(ifft2(fftshift(fft2(x)))) * weights).sum()

    assert grad_check(loss, [x]) < 1e-4


def test_magnitude_gradient_is_zero_at_origin(float64):
    x = Tensor(np.zeros((1, 1, 4, 4)), requires_grad=True)
    backward(complex_abs(fft2(x)).sum())
    np.testing.assert_array_equal(x.grad, np.zeros((1, 1, 4, 4)))


def test_fft2_is_linear(float64):
    rng = np.random.default_rng(6)
    x, y = rng.normal(size=(2, 8, 12)), rng.normal(size=(2, 8, 12))
    combined = fft2(Tensor(2.5 * x - 0.75 * y)).data
    np.testing.assert_allclose(combined, 2.5 * fft2(Tensor(x)).data - 0.75 * fft2(Tensor(y)).data, atol=1e-10)


def test_fftshift_twice_is_identity_for_even_sizes(float64):
    rng = np.random.default_rng(7)
    z = rng.normal(size=(1, 2, 8, 6)) + 1j * rng.normal(size=(1, 2, 8, 6))
    np.testing.assert_array_equal(fftshift(fftshift(Tensor(z))).data, z)
    np.testing.assert_array_equal(fftshift(Tensor(z)).data, np.fft.fftshift(z, axes=(-2, -1)))
