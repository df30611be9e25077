"""
Elementwise, shape and reduction operations. Operands of binary operations
must have identical shapes; python scalars are the only implicit broadcast.
The two rescale patterns used by attention ([N,1,1,C] per channel and [N,H,W,1]
per position) and bias addition are explicit operations.

Date: 2024-03-08
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import numbers
import numpy as np

from typing import Sequence

from common.exceptions import ShapeError
from tensor_engine.tensor import Function, Tensor, check_same_shape


def _normalize_axes(axes, ndim: int) -> tuple:
    """Converts None, an int or a sequence of ints into a sorted tuple of non-negative axes."""

    if axes is None:
        return tuple(range(ndim))

    if isinstance(axes, numbers.Integral):
        axes = (axes,)

    normalized = tuple(sorted(set(int(axis) % ndim if ndim else 0 for axis in axes)))

    if not normalized:
        raise ShapeError("Empty axis set")

    for axis in axes:
        if not -ndim <= int(axis) < ndim:
            raise ShapeError("Axis {} out of range for a rank-{} tensor".format(axis, ndim))

    return normalized


class Add(Function):
    def forward(self, x, y):
        check_same_shape(x.shape, y.shape, "add")
        return x + y

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, x, y):
        check_same_shape(x.shape, y.shape, "sub")
        return x - y

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, x, y):
        check_same_shape(x.shape, y.shape, "mul")
        self.x, self.y = x, y
        return x * y

    def backward(self, grad):
        return grad * self.y, grad * self.x


class Div(Function):
    def forward(self, x, y):
        check_same_shape(x.shape, y.shape, "div")
        self.x, self.y = x, y
        return x / y

    def backward(self, grad):
        return grad / self.y, -grad * self.x / (self.y * self.y)


class AddConst(Function):
    def forward(self, x, const):
        return x + const

    def backward(self, grad):
        return (grad,)


class MulConst(Function):
    def forward(self, x, const):
        self.const = const
        return x * const

    def backward(self, grad):
        return (grad * self.const,)


class BiasAdd(Function):
    """Adds a per-channel bias along the last axis."""

    def forward(self, x, bias):
        if bias.ndim != 1 or bias.shape[0] != x.shape[-1]:
            raise ShapeError("bias_add: bias of shape {} does not match channel axis {} of extent {}".format(
                list(bias.shape), x.ndim - 1, x.shape[-1]))
        return x + bias

    def backward(self, grad):
        return grad, grad.reshape(-1, grad.shape[-1]).sum(axis=0)


class Rescale(Function):
    """Multiplies a [N,H,W,C] map by weights of shape [N,1,1,C] (channels) or [N,H,W,1] (positions)."""

    def forward(self, x, weights):
        if x.ndim != 4 or weights.ndim != 4:
            raise ShapeError("rescale: expected rank-4 operands, got {} and {}".format(list(x.shape),
                list(weights.shape)))

        n, h, w, c = x.shape
        if weights.shape == (n, 1, 1, c):
            self.reduce_axes = (1, 2)
        elif weights.shape == (n, h, w, 1):
            self.reduce_axes = (3,)
        else:
            raise ShapeError("rescale: weights of shape {} are neither channel [{},1,1,{}] nor spatial [{},{},{},1]"
                .format(list(weights.shape), n, c, n, h, w))

        self.x, self.weights = x, weights
        return x * weights

    def backward(self, grad):
        return grad * self.weights, (grad * self.x).sum(axis=self.reduce_axes, keepdims=True)


class Sum(Function):
    def forward(self, x, axes, keepdims):
        self.in_shape = x.shape
        self.axes     = _normalize_axes(axes, x.ndim)
        return np.sum(x, axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        grad = np.expand_dims(grad, self.axes) if grad.ndim != len(self.in_shape) else grad
        return (np.broadcast_to(grad, self.in_shape).copy(),)


class Mean(Function):
    def forward(self, x, axes, keepdims):
        self.in_shape = x.shape
        self.axes     = _normalize_axes(axes, x.ndim)
        self.count    = int(np.prod([x.shape[axis] for axis in self.axes]))
        return np.mean(x, axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        grad = np.expand_dims(grad, self.axes) if grad.ndim != len(self.in_shape) else grad
        return (np.broadcast_to(grad / self.count, self.in_shape).copy(),)


class Reshape(Function):
    def forward(self, x, shape):
        self.in_shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError as exc:
            raise ShapeError("reshape: cannot reshape {} into {}".format(list(x.shape), list(shape))) from exc

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class Concat(Function):
    def forward(self, *arrays, axis):
        ndim = arrays[0].ndim
        self.axis = axis % ndim

        for array in arrays[1:]:
            if array.ndim != ndim:
                raise ShapeError("concat: rank mismatch, {} vs {}".format(list(arrays[0].shape), list(array.shape)))
            for dim in range(ndim):
                if dim != self.axis and array.shape[dim] != arrays[0].shape[dim]:
                    raise ShapeError("concat: extent mismatch on axis {} ({} vs {})".format(dim,
                        arrays[0].shape[dim], array.shape[dim]))

        self.splits = np.cumsum([array.shape[self.axis] for array in arrays])[:-1]
        return np.concatenate(arrays, axis=self.axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=self.axis))


def _binary(func_tensor, func_const, x: Tensor, other):
    if isinstance(other, Tensor):
        return func_tensor.apply(x, other)

    if isinstance(other, numbers.Real):
        return func_const(x, float(other))

    raise TypeError("Unsupported operand of type {}".format(type(other).__name__))


def add(x: Tensor, other) -> Tensor:
    return _binary(Add, lambda t, c: AddConst.apply(t, const=c), x, other)


def sub(x: Tensor, other) -> Tensor:
    return _binary(Sub, lambda t, c: AddConst.apply(t, const=-c), x, other)


def mul(x: Tensor, other) -> Tensor:
    return _binary(Mul, lambda t, c: MulConst.apply(t, const=c), x, other)


def div(x: Tensor, other) -> Tensor:
    return _binary(Div, lambda t, c: MulConst.apply(t, const=1.0 / c), x, other)


def bias_add(x: Tensor, bias: Tensor) -> Tensor:
    return BiasAdd.apply(x, bias)


def rescale(x: Tensor, weights: Tensor) -> Tensor:
    return Rescale.apply(x, weights)


def sum(x: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    return Sum.apply(x, axes=axes, keepdims=keepdims)


def mean(x: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axes=axes, keepdims=keepdims)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat: no tensors given")
    return Concat.apply(*tensors, axis=axis)
