"""
Dense tensors with reverse-mode differentiation.

Differentiable operations are `Function` subclasses. Every call to `Function.apply` that involves a tensor
requiring gradients is recorded on the thread-local `Tape`; `backward` replays the tape in exact reverse order.

Gradients of complex tensors follow the convention grad = dL/d(real) + 1j * dL/d(imag).
"""
import logging
import threading
from contextlib import contextmanager
from typing import Any, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from tensor.constants import PrecisionEnum

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]

_state = threading.local()
_debug_checks = False


class ShapeError(ValueError):
    """
    Structured dimension error raised by tensor operations.
    """
    def __init__(self, op: str, expected: Any, got: Any, detail: str = '') -> None:
        self.op = op
        self.expected = expected
        self.got = got
        message = f'{op}: expected {expected}, got {got}'
        if detail:
            message += f' ({detail})'
        super().__init__(message)


class NonFiniteError(FloatingPointError):
    """
    Raised by the debug finite check when an operation produces NaN or Inf.
    """


def set_debug_checks(enabled: bool) -> None:
    """
    Enables the finite-value assertion on every forward op (used by the test suite).
    """
    global _debug_checks
    _debug_checks = bool(enabled)


def default_precision() -> PrecisionEnum:
    return getattr(_state, 'precision', PrecisionEnum.float32)


def set_default_precision(precision: Union[PrecisionEnum, str, int]) -> None:
    _state.precision = PrecisionEnum(precision)


@contextmanager
def use_precision(precision: Union[PrecisionEnum, str, int]) -> Iterator[PrecisionEnum]:
    """
    Temporarily switches the precision of newly created tensors.
    """
    previous = default_precision()
    set_default_precision(precision)
    try:
        yield default_precision()
    finally:
        _state.precision = previous


def grad_enabled() -> bool:
    return getattr(_state, 'grad_enabled', True)


@contextmanager
def no_grad() -> Iterator[None]:
    """
    Disables tape recording inside the block.
    """
    previous = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class TapeEntry(NamedTuple):
    function: 'Function'
    inputs: Tuple['Tensor', ...]
    output: 'Tensor'


class Tape:
    """
    Ordered record of executed differentiable ops and their saved inputs.
    """
    def __init__(self) -> None:
        self.entries: List[TapeEntry] = []

    def record(self, function: 'Function', inputs: Tuple['Tensor', ...], output: 'Tensor') -> None:
        self.entries.append(TapeEntry(function=function, inputs=inputs, output=output))

    def clear(self) -> None:
        self.entries = []

    def __len__(self) -> int:
        return len(self.entries)


def current_tape() -> Tape:
    tape = getattr(_state, 'tape', None)
    if tape is None:
        tape = Tape()
        _state.tape = tape
    return tape


def reset_tape() -> None:
    current_tape().clear()


class Tensor:
    """
    N-dimensional real array with optional gradient tape participation.
    """
    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: str = '') -> None:
        array = np.asarray(data)
        if array.dtype.kind in 'biuf':
            array = array.astype(default_precision().real_dtype, copy=False)
        elif array.dtype.kind == 'c':
            array = array.astype(default_precision().complex_dtype, copy=False)
        else:
            raise ValueError(f'Unsupported tensor data type {array.dtype}.')
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def _wrap(cls, array: np.ndarray) -> 'Tensor':
        """
        Wraps an op result without casting it.
        """
        out = ComplexTensor.__new__(ComplexTensor) if np.iscomplexobj(array) else Tensor.__new__(Tensor)
        out.data = array
        out.requires_grad = False
        out.grad = None
        out.name = ''
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError('item', 'single element', self.shape)
        return self.data.reshape(-1)[0].item()

    def zero_grad(self) -> None:
        self.grad = None

    def reshape(self, *shape: int) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=tuple(shape))

    def transpose(self, *axes: int) -> 'Tensor':
        return Transpose.apply(self, axes=tuple(axes))

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> 'Tensor':
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> 'Tensor':
        count = self.size if axis is None else int(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def __add__(self, other: Union['Tensor', ArrayLike]) -> 'Tensor':
        return Add.apply(self, as_tensor(other, like=self))

    def __radd__(self, other: ArrayLike) -> 'Tensor':
        return Add.apply(as_tensor(other, like=self), self)

    def __sub__(self, other: Union['Tensor', ArrayLike]) -> 'Tensor':
        return Sub.apply(self, as_tensor(other, like=self))

    def __rsub__(self, other: ArrayLike) -> 'Tensor':
        return Sub.apply(as_tensor(other, like=self), self)

    def __mul__(self, other: Union['Tensor', ArrayLike]) -> 'Tensor':
        return Mul.apply(self, as_tensor(other, like=self))

    def __rmul__(self, other: ArrayLike) -> 'Tensor':
        return Mul.apply(as_tensor(other, like=self), self)

    def __neg__(self) -> 'Tensor':
        return Mul.apply(self, as_tensor(-1.0, like=self))

    def __repr__(self) -> str:
        return f'{type(self).__name__}(shape={list(self.shape)}, dtype={self.dtype}, requires_grad={self.requires_grad})'


class ComplexTensor(Tensor):
    """
    Complex tensor; `real` and `imag` expose same-layout real buffers.
    """
    @property
    def real(self) -> np.ndarray:
        return self.data.real

    @property
    def imag(self) -> np.ndarray:
        return self.data.imag


class Parameter(Tensor):
    """
    Trainable tensor owned by a module.
    """
    def __init__(self, data: ArrayLike, name: str = '') -> None:
        super().__init__(data, requires_grad=True, name=name)


class Buffer(Tensor):
    """
    Non-trainable module state (BatchNorm running statistics, initial masks).
    """
    def __init__(self, data: ArrayLike, name: str = '') -> None:
        super().__init__(data, requires_grad=False, name=name)


def as_tensor(value: Union[Tensor, ArrayLike], like: Optional[Tensor] = None) -> Tensor:
    """
    Returns `value` as a constant tensor; scalars take the real dtype of `like`.
    """
    if isinstance(value, Tensor):
        return value
    array = np.asarray(value)
    if like is not None and array.dtype.kind in 'biuf':
        real = like.data.real.dtype if np.iscomplexobj(like.data) else like.data.dtype
        return Tensor._wrap(array.astype(real))
    return Tensor(array)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """
    Sums out broadcast dimensions so that `grad` matches `shape`.
    """
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function:
    """
    Base class of differentiable operations.
    `forward` receives the numpy buffers of the input tensors, `backward` returns one gradient per input
    (or None when the input needs none).
    """
    def __init__(self) -> None:
        self.needs_input_grad: Tuple[bool, ...] = ()

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f'{type(self).__name__}.forward')

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f'{type(self).__name__}.backward')

    @classmethod
    def apply(cls, *tensors: Tensor, **kwargs: Any) -> Tensor:
        function = cls()
        function.needs_input_grad = tuple(t.requires_grad for t in tensors)
        out = Tensor._wrap(function.forward(*(t.data for t in tensors), **kwargs))
        if _debug_checks and not np.all(np.isfinite(out.data)):
            raise NonFiniteError(f'{cls.__name__} produced non-finite values')
        if grad_enabled() and any(function.needs_input_grad):
            out.requires_grad = True
            current_tape().record(function, tensors, out)
        return out


def backward(loss: Tensor) -> None:
    """
    Accumulates d(loss)/d(leaf) into `.grad` of every leaf tensor requiring gradients, then clears the tape.
    """
    if loss.size != 1:
        raise ShapeError('backward', 'scalar loss', loss.shape)
    if not loss.requires_grad:
        raise ValueError('backward: loss is not attached to the active tape')
    tape = current_tape()
    produced = {id(entry.output) for entry in tape.entries}
    pending = {id(loss): np.ones_like(loss.data)}
    for entry in reversed(tape.entries):
        grad = pending.pop(id(entry.output), None)
        if grad is None:
            continue
        input_grads = entry.function.backward(grad)
        for tensor, input_grad in zip(entry.inputs, input_grads):
            if input_grad is None or not tensor.requires_grad:
                continue
            if not np.iscomplexobj(tensor.data) and np.iscomplexobj(input_grad):
                input_grad = input_grad.real
            input_grad = input_grad.astype(tensor.data.dtype, copy=False)
            key = id(tensor)
            if key in produced:
                pending[key] = input_grad if key not in pending else pending[key] + input_grad
            elif tensor.grad is None:
                tensor.grad = np.array(input_grad, copy=True)
            else:
                tensor.grad = tensor.grad + input_grad
    tape.clear()


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return unbroadcast(grad, self.shapes[0]), unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.a, self.b = a, b
        return a * b

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        grad_a = grad_b = None
        if self.needs_input_grad[0]:
            grad_a = unbroadcast(grad * np.conj(self.b), self.a.shape)
        if self.needs_input_grad[1]:
            grad_b = unbroadcast(grad * np.conj(self.a), self.b.shape)
        return grad_a, grad_b


class Sum(Function):
    def forward(self, a: np.ndarray, axis=None, keepdims: bool = False) -> np.ndarray:
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Reshape(Function):
    def forward(self, a: np.ndarray, shape: Tuple[int, ...] = ()) -> np.ndarray:
        self.shape = a.shape
        return a.reshape(shape)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, a: np.ndarray, axes: Tuple[int, ...] = ()) -> np.ndarray:
        self.axes = axes or tuple(reversed(range(a.ndim)))
        return np.ascontiguousarray(a.transpose(self.axes))

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad.transpose(np.argsort(self.axes)),)
