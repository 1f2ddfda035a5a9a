"""
Differentiable operations needed by the detector network.

FFT normalization: `fft2` is the unnormalized forward DFT, `ifft2` applies 1/(H*W).
"""
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from tensor.constants import PaddingModeEnum, PrecisionEnum, BN_EPS, BN_MOMENTUM
from tensor.tensor_core import ComplexTensor, Function, ShapeError, Tensor, as_tensor


def _complex_dtype(dtype: np.dtype) -> np.dtype:
    return PrecisionEnum.from_dtype(dtype).complex_dtype


def _fold_edge_padding(grad_padded: np.ndarray, height: int, width: int, padding: int) -> np.ndarray:
    """
    Adjoint of clamp-to-edge padding: sums border gradients back onto the edge pixels.
    """
    rows = np.clip(np.arange(-padding, height + padding), 0, height - 1)
    cols = np.clip(np.arange(-padding, width + padding), 0, width - 1)
    folded_rows = np.zeros(grad_padded.shape[:2] + (height, grad_padded.shape[3]), dtype=grad_padded.dtype)
    np.add.at(folded_rows, (slice(None), slice(None), rows), grad_padded)
    folded = np.zeros(grad_padded.shape[:2] + (height, width), dtype=grad_padded.dtype)
    np.add.at(folded, (slice(None), slice(None), slice(None), cols), folded_rows)
    return folded


class Conv2d(Function):
    """
    Cross-correlation of a [B,C,H,W] input with an [O,C,k,k] kernel.
    """
    def forward(self, x: np.ndarray, kernel: np.ndarray, stride: int = 1, padding: int = 0,
                padding_mode: PaddingModeEnum = PaddingModeEnum.zeros) -> np.ndarray:
        if x.ndim != 4:
            raise ShapeError('conv2d', '4-D input [B,C,H,W]', x.shape)
        if kernel.ndim != 4 or kernel.shape[2] != kernel.shape[3]:
            raise ShapeError('conv2d', 'square kernel [O,C,k,k]', kernel.shape)
        if kernel.shape[1] != x.shape[1]:
            raise ShapeError('conv2d', f'{kernel.shape[1]} input channels', x.shape[1])
        k = kernel.shape[2]
        if k % 2 == 0:
            raise ShapeError('conv2d', 'odd kernel size', k)
        height, width = x.shape[2], x.shape[3]
        out_h = (height + 2 * padding - k) // stride + 1
        out_w = (width + 2 * padding - k) // stride + 1
        if out_h < 1 or out_w < 1:
            raise ShapeError('conv2d', f'spatial size >= {k - 2 * padding}', (height, width))
        mode = 'edge' if PaddingModeEnum(padding_mode) is PaddingModeEnum.edge else 'constant'
        padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), mode=mode) if padding else x
        self.x_shape, self.padded, self.kernel = x.shape, padded, kernel
        self.k, self.stride, self.padding, self.mode = k, stride, padding, mode
        self.out_hw = (out_h, out_w)
        out = np.zeros((kernel.shape[0], x.shape[0], out_h, out_w), dtype=np.result_type(x, kernel))
        for i in range(k):
            for j in range(k):
                window = padded[:, :, self._rows(i), self._cols(j)]
                out += np.tensordot(kernel[:, :, i, j], window, axes=([1], [1]))
        return np.ascontiguousarray(out.transpose(1, 0, 2, 3))

    def _rows(self, i: int) -> slice:
        return slice(i, i + self.stride * (self.out_hw[0] - 1) + 1, self.stride)

    def _cols(self, j: int) -> slice:
        return slice(j, j + self.stride * (self.out_hw[1] - 1) + 1, self.stride)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        grad_t = grad.transpose(1, 0, 2, 3)
        grad_x = grad_kernel = None
        if self.needs_input_grad[0]:
            grad_padded = np.zeros_like(self.padded)
        if self.needs_input_grad[1]:
            grad_kernel = np.zeros_like(self.kernel)
        for i in range(self.k):
            for j in range(self.k):
                rows, cols = self._rows(i), self._cols(j)
                if self.needs_input_grad[1]:
                    window = self.padded[:, :, rows, cols]
                    grad_kernel[:, :, i, j] = np.tensordot(grad_t, window, axes=([1, 2, 3], [0, 2, 3]))
                if self.needs_input_grad[0]:
                    contribution = np.tensordot(self.kernel[:, :, i, j], grad_t, axes=([0], [0]))
                    grad_padded[:, :, rows, cols] += contribution.transpose(1, 0, 2, 3)
        if self.needs_input_grad[0]:
            p, (height, width) = self.padding, self.x_shape[2:]
            if not p:
                grad_x = grad_padded
            elif self.mode == 'edge':
                grad_x = _fold_edge_padding(grad_padded, height, width, p)
            else:
                grad_x = grad_padded[:, :, p:p + height, p:p + width]
        return grad_x, grad_kernel


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0,
           padding_mode: Union[PaddingModeEnum, str] = PaddingModeEnum.zeros) -> Tensor:
    """
    2-D cross-correlation. H' = floor((H + 2p - k) / stride) + 1.
    The kernel receives a gradient only when it requires one (trainable).
    """
    return Conv2d.apply(x, kernel, stride=stride, padding=padding, padding_mode=PaddingModeEnum(padding_mode))


class BatchNorm2d(Function):
    def forward(self, x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, running_mean: np.ndarray = None,
                running_var: np.ndarray = None, training: bool = True, momentum: float = BN_MOMENTUM,
                eps: float = BN_EPS) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != gamma.shape[0]:
            raise ShapeError('batchnorm2d', f'[B,{gamma.shape[0]},H,W]', x.shape)
        axes = (0, 2, 3)
        if training:
            count = x.shape[0] * x.shape[2] * x.shape[3]
            if count == 0:
                raise ValueError('batchnorm2d: zero-size batch in training mode')
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            if running_mean is not None:
                unbiased = var * count / (count - 1) if count > 1 else var
                running_mean *= (1.0 - momentum)
                running_mean += momentum * mean
                running_var *= (1.0 - momentum)
                running_var += momentum * unbiased
        else:
            mean, var = running_mean, running_var
        self.training = training
        self.inv_std = (1.0 / np.sqrt(var + eps)).reshape(1, -1, 1, 1)
        self.x_hat = (x - mean.reshape(1, -1, 1, 1)) * self.inv_std
        self.gamma = gamma.reshape(1, -1, 1, 1)
        return self.x_hat * self.gamma + beta.reshape(1, -1, 1, 1)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        axes = (0, 2, 3)
        grad_gamma = (grad * self.x_hat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        grad_x_hat = grad * self.gamma
        if self.training:
            count = grad.shape[0] * grad.shape[2] * grad.shape[3]
            grad_x = (self.inv_std / count) * (
                count * grad_x_hat
                - grad_x_hat.sum(axis=axes, keepdims=True)
                - self.x_hat * (grad_x_hat * self.x_hat).sum(axis=axes, keepdims=True)
            )
        else:
            grad_x = grad_x_hat * self.inv_std
        return grad_x, grad_gamma, grad_beta


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
                training: bool, momentum: float = BN_MOMENTUM, eps: float = BN_EPS) -> Tensor:
    """
    Training mode normalizes by batch statistics and updates the running statistics in place;
    eval mode normalizes by the running statistics.
    """
    return BatchNorm2d.apply(x, gamma, beta, running_mean=running_mean, running_var=running_var,
                             training=training, momentum=momentum, eps=eps)


class ReLU(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad * self.mask,)


class Sigmoid(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = stable_sigmoid(x)
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad * self.out * (1.0 - self.out),)


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    decay = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + decay), decay / (1.0 + decay)).astype(np.asarray(x).dtype, copy=False)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


class AvgPool2d(Function):
    def forward(self, x: np.ndarray, kernel_size: int = 2, stride: int = 2) -> np.ndarray:
        height, width = x.shape[2], x.shape[3]
        if height < kernel_size or width < kernel_size:
            raise ShapeError('avgpool2d', f'H,W >= {kernel_size}', (height, width))
        out_h = (height - kernel_size) // stride + 1
        out_w = (width - kernel_size) // stride + 1
        self.x_shape, self.k, self.stride, self.out_hw = x.shape, kernel_size, stride, (out_h, out_w)
        out = np.zeros(x.shape[:2] + (out_h, out_w), dtype=x.dtype)
        for i in range(kernel_size):
            for j in range(kernel_size):
                out += x[:, :, self._window(i, 0), self._window(j, 1)]
        return out / (kernel_size * kernel_size)

    def _window(self, offset: int, axis: int) -> slice:
        return slice(offset, offset + self.stride * (self.out_hw[axis] - 1) + 1, self.stride)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        grad_x = np.zeros(self.x_shape, dtype=grad.dtype)
        share = grad / (self.k * self.k)
        for i in range(self.k):
            for j in range(self.k):
                grad_x[:, :, self._window(i, 0), self._window(j, 1)] += share
        return (grad_x,)


def avgpool2d(x: Tensor, kernel_size: int = 2, stride: int = 2) -> Tensor:
    return AvgPool2d.apply(x, kernel_size=kernel_size, stride=stride)


def adaptive_avgpool(x: Tensor) -> Tensor:
    """
    Global mean per channel -> [B,C,1,1].
    """
    return x.mean(axis=(2, 3), keepdims=True)


class FullyConnected(Function):
    def forward(self, x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
            raise ShapeError('fully_connected', f'input [B,{weight.shape[0]}]', x.shape)
        if bias.shape != (weight.shape[1],):
            raise ShapeError('fully_connected', f'bias [{weight.shape[1]}]', bias.shape)
        self.x, self.weight = x, weight
        return x @ weight + bias

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return grad @ self.weight.T, self.x.T @ grad, grad.sum(axis=0)


def fully_connected(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return FullyConnected.apply(x, weight, bias)


class FFT2(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.hw = x.shape[-2] * x.shape[-1]
        return np.fft.fft2(x, axes=(-2, -1)).astype(_complex_dtype(x.dtype), copy=False)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        # Adjoint of the unnormalized DFT.
        return (np.fft.ifft2(grad, axes=(-2, -1)) * self.hw,)


class IFFT2(Function):
    def forward(self, z: np.ndarray) -> np.ndarray:
        self.hw = z.shape[-2] * z.shape[-1]
        return np.fft.ifft2(z, axes=(-2, -1)).astype(_complex_dtype(z.dtype), copy=False)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (np.fft.fft2(grad, axes=(-2, -1)) / self.hw,)


class FFTShift(Function):
    def forward(self, z: np.ndarray) -> np.ndarray:
        return np.fft.fftshift(z, axes=(-2, -1))

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (np.fft.ifftshift(grad, axes=(-2, -1)),)


def fft2(x: Tensor) -> ComplexTensor:
    """
    Unnormalized 2-D DFT over the last two axes.
    """
    return FFT2.apply(x)


def ifft2(z: Tensor) -> ComplexTensor:
    """
    Inverse 2-D DFT over the last two axes, scaled by 1/(H*W).
    """
    return IFFT2.apply(z)


def fftshift(z: Tensor) -> ComplexTensor:
    """
    Rotates the last two axes by (floor(H/2), floor(W/2)), moving DC to the centre.
    """
    return FFTShift.apply(z)


class ComplexAbs(Function):
    def forward(self, z: np.ndarray) -> np.ndarray:
        self.z = z
        self.magnitude = np.abs(z)
        return self.magnitude

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        safe = np.where(self.magnitude > 0, self.magnitude, 1.0)
        return (np.where(self.magnitude > 0, grad * self.z / safe, 0),)


def complex_abs(z: Tensor) -> Tensor:
    """
    Elementwise magnitude sqrt(re^2 + im^2).
    """
    return ComplexAbs.apply(z)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int = 0) -> np.ndarray:
        self.axis = axis
        self.bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return tuple(np.split(grad, self.bounds, axis=self.axis))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


class BCEWithLogits(Function):
    def forward(self, logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
        self.logits, self.labels = logits, labels
        # log(1 + exp(z)) - z*y in log-sum-exp form
        losses = np.maximum(logits, 0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))
        return np.asarray(losses.mean(), dtype=logits.dtype)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        grad_logits = grad * (stable_sigmoid(self.logits) - self.labels) / self.logits.size
        return grad_logits, None


def bce_with_logits(logits: Tensor, labels: Union[Tensor, np.ndarray]) -> Tensor:
    """
    Mean binary cross-entropy on raw logits.
    """
    labels = as_tensor(np.asarray(labels.data if isinstance(labels, Tensor) else labels).reshape(logits.shape),
                       like=logits)
    return BCEWithLogits.apply(logits, labels)
