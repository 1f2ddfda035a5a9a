"""
Layer containers built on the tensor ops.
"""
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from tensor.constants import PaddingModeEnum, PrecisionEnum, BN_EPS, BN_MOMENTUM
from tensor.tensor_core import Buffer, Parameter, ShapeError, Tensor, default_precision
from tensor.tensor_ops import batchnorm2d, conv2d, fully_connected, relu


class Module:
    """
    Base class of the network layers.
    Parameters, buffers and child modules are discovered from instance attributes in assignment order;
    lists of modules are walked by index.
    """
    training: bool = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError(f'{type(self).__name__}.forward')

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[Tuple[str, Union['Module', Parameter, Buffer]]]:
        for name, value in vars(self).items():
            if isinstance(value, (Module, Parameter, Buffer)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f'{name}.{index}', item

    def named_modules(self, prefix: str = '') -> Iterator[Tuple[str, 'Module']]:
        yield prefix, self
        for name, child in self._children():
            if isinstance(child, Module):
                yield from child.named_modules(f'{prefix}{name}.')

    def named_parameters(self, prefix: str = '') -> Iterator[Tuple[str, Parameter]]:
        for name, child in self._children():
            if isinstance(child, Parameter):
                yield prefix + name, child
            elif isinstance(child, Module):
                yield from child.named_parameters(f'{prefix}{name}.')

    def named_buffers(self, prefix: str = '') -> Iterator[Tuple[str, Buffer]]:
        for name, child in self._children():
            if isinstance(child, Buffer):
                yield prefix + name, child
            elif isinstance(child, Module):
                yield from child.named_buffers(f'{prefix}{name}.')

    def parameters(self) -> List[Parameter]:
        return [param for _, param in self.named_parameters()]

    def parameter_count(self) -> int:
        """
        Number of trainable scalars.
        """
        return int(sum(param.size for param in self.parameters()))

    def train(self, mode: bool = True) -> 'Module':
        for _, module in self.named_modules():
            module.training = mode
        return self

    def eval(self) -> 'Module':
        return self.train(False)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def state_dict(self) -> 'OrderedDict[str, np.ndarray]':
        """
        Parameters then buffers, in discovery order.
        """
        state = OrderedDict()
        for name, param in self.named_parameters():
            state[name] = param.data
        for name, buffer in self.named_buffers():
            state[name] = buffer.data
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        own.update(self.named_buffers())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f'State mismatch: missing {missing}, unexpected {unexpected}')
        for name, tensor in own.items():
            value = np.asarray(state[name])
            if value.shape != tensor.shape:
                raise ShapeError('load_state_dict', tensor.shape, value.shape, detail=name)
            tensor.data = np.array(value, dtype=tensor.dtype, copy=True)

    def astype(self, precision: Union[PrecisionEnum, str, int]) -> 'Module':
        dtype = PrecisionEnum(precision).real_dtype
        for _, tensor in list(self.named_parameters()) + list(self.named_buffers()):
            tensor.data = tensor.data.astype(dtype)
            tensor.grad = None
        return self

    @property
    def precision(self) -> PrecisionEnum:
        params = self.parameters()
        return PrecisionEnum.from_dtype(params[0].dtype) if params else default_precision()


def _rng(rng: Optional[np.random.Generator]) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(0)


class Conv2d(Module):
    """
    Bias-free convolution with fan-in-scaled uniform init (bound sqrt(6 / fan_in)).
    """
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3, stride: int = 1,
                 padding: Optional[int] = None, padding_mode: PaddingModeEnum = PaddingModeEnum.zeros,
                 rng: Optional[np.random.Generator] = None) -> None:
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ValueError(f'Conv kernel size {kernel_size} is invalid. Should be a positive odd number.')
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = (kernel_size - 1) // 2 if padding is None else padding
        self.padding_mode = PaddingModeEnum(padding_mode)
        fan_in = in_channels * kernel_size * kernel_size
        bound = np.sqrt(6.0 / fan_in)
        self.weight = Parameter(_rng(rng).uniform(-bound, bound, (out_channels, in_channels, kernel_size, kernel_size)))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError('conv2d', f'[B,{self.in_channels},H,W]', x.shape)
        return conv2d(x, self.weight, stride=self.stride, padding=self.padding, padding_mode=self.padding_mode)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPS) -> None:
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = Buffer(np.zeros(channels))
        self.running_var = Buffer(np.ones(channels))

    def forward(self, x: Tensor) -> Tensor:
        return batchnorm2d(x, self.gamma, self.beta, self.running_mean.data, self.running_var.data,
                           training=self.training, momentum=self.momentum, eps=self.eps)


class Linear(Module):
    """
    Affine map x @ W + b with W stored as [in, out]; bias starts at zero.
    """
    def __init__(self, in_features: int, out_features: int, rng: Optional[np.random.Generator] = None) -> None:
        self.in_features = in_features
        self.out_features = out_features
        bound = np.sqrt(3.0 / in_features)
        self.weight = Parameter(_rng(rng).uniform(-bound, bound, (in_features, out_features)))
        self.bias = Parameter(np.zeros(out_features))

    def forward(self, x: Tensor) -> Tensor:
        return fully_connected(x, self.weight, self.bias)


class ConvBnReLU(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3,
                 rng: Optional[np.random.Generator] = None) -> None:
        self.conv = Conv2d(in_channels, out_channels, kernel_size, rng=rng)
        self.bn = BatchNorm2d(out_channels)

    def forward(self, x: Tensor) -> Tensor:
        return relu(self.bn(self.conv(x)))
