"""
Numerical kernels of the network: 2D convolution, depth-wise axis convolution,
softmax, pooling, resampling, activations, dropout and fully-connected layers.
All feature maps use the channels-last layout [N, H, W, C].

Date: 2024-03-08
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import numpy as np
import scipy.special

from numpy.lib.stride_tricks import sliding_window_view

from common.exceptions import ShapeError
from tensor_engine.ops import _normalize_axes, mean
from tensor_engine.tensor import Function, Tensor

PADDING_SAME  = "same"
PADDING_VALID = "valid"

AXIS_H = "H"
AXIS_W = "W"
_AXIS_INDEX = {AXIS_H: 1, AXIS_W: 2}


def _same_padding(size: int, kernel: int, stride: int) -> tuple:
    """Computes (pad_before, pad_after, output_extent) of same padding along one axis. Odd totals put the extra
    element after, so even kernels (2x2 up-convolution) stay aligned with the upper-left pixel."""

    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)

    return total // 2, total - total // 2, out


class Conv2d(Function):
    """Cross-correlation of [N,H,W,Cin] with a [kh,kw,Cin,Cout] kernel plus a [Cout] bias, via im2col + GEMM."""

    def forward(self, x, kernel, bias, padding, stride):
        if x.ndim != 4:
            raise ShapeError("conv2d: input must be [N,H,W,Cin], got {}".format(list(x.shape)))
        if kernel.ndim != 4:
            raise ShapeError("conv2d: kernel must be [kh,kw,Cin,Cout], got {}".format(list(kernel.shape)))
        if kernel.shape[2] != x.shape[3]:
            raise ShapeError("conv2d: input channel axis 3 has extent {} but kernel axis 2 (Cin) has {}".format(
                x.shape[3], kernel.shape[2]))
        if bias.shape != (kernel.shape[3],):
            raise ShapeError("conv2d: bias axis 0 has extent {} but kernel axis 3 (Cout) has {}".format(
                bias.shape[0] if bias.ndim else None, kernel.shape[3]))
        if int(stride) < 1:
            raise ShapeError("conv2d: stride must be >= 1, got {}".format(stride))

        n, h, w, c_in = x.shape
        kh, kw, _, c_out = kernel.shape

        if padding == PADDING_SAME:
            pad_top, pad_bottom, out_h = _same_padding(h, kh, stride)
            pad_left, pad_right, out_w = _same_padding(w, kw, stride)
        elif padding == PADDING_VALID:
            if h < kh or w < kw:
                axis = 1 if h < kh else 2
                raise ShapeError("conv2d: input axis {} extent {} smaller than the kernel for valid padding".format(
                    axis, x.shape[axis]))
            pad_top = pad_bottom = pad_left = pad_right = 0
            out_h, out_w = (h - kh) // stride + 1, (w - kw) // stride + 1
        else:
            raise ShapeError("conv2d: unknown padding \"{}\"".format(padding))

        x_padded = np.pad(x, ((0, 0), (pad_top, pad_bottom), (pad_left, pad_right), (0, 0)))

        # [N, out_h, out_w, Cin, kh, kw]
        windows = sliding_window_view(x_padded, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :out_h, :out_w]
        columns = np.ascontiguousarray(windows).reshape(n * out_h * out_w, c_in * kh * kw)
        kernel_matrix = kernel.transpose(2, 0, 1, 3).reshape(c_in * kh * kw, c_out)

        self.columns       = columns
        self.kernel        = kernel
        self.stride        = stride
        self.padded_shape  = x_padded.shape
        self.offsets       = (pad_top, pad_left)
        self.in_shape      = x.shape
        self.out_hw        = (out_h, out_w)

        return (columns @ kernel_matrix).reshape(n, out_h, out_w, c_out) + bias

    def backward(self, grad):
        kh, kw, c_in, c_out = self.kernel.shape
        out_h, out_w = self.out_hw
        stride = self.stride

        grad_matrix = grad.reshape(-1, c_out)
        grad_kernel = (self.columns.T @ grad_matrix).reshape(c_in, kh, kw, c_out).transpose(1, 2, 0, 3)
        grad_bias = grad_matrix.sum(axis=0)

        grad_padded = np.zeros(self.padded_shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                grad_padded[:, i:i + stride * (out_h - 1) + 1:stride, j:j + stride * (out_w - 1) + 1:stride, :] += \
                    grad @ self.kernel[i, j].T

        top, left = self.offsets
        _, h, w, _ = self.in_shape

        return grad_padded[:, top:top + h, left:left + w, :], np.ascontiguousarray(grad_kernel), grad_bias


class DepthwiseAxisConv(Function):
    """Per-channel dot product along one spatial axis, collapsing that axis to extent 1."""

    def forward(self, x, filt, bias, axis):
        if x.ndim != 4:
            raise ShapeError("depthwise_axis_conv: input must be [N,H,W,C], got {}".format(list(x.shape)))
        if axis not in _AXIS_INDEX:
            raise ShapeError("depthwise_axis_conv: axis must be H or W, got {}".format(axis))

        axis_idx = _AXIS_INDEX[axis]

        if filt.shape != (x.shape[axis_idx], x.shape[3]):
            raise ShapeError("depthwise_axis_conv: filter shape {} must equal [{}, {}] (extent of axis {} ({}), "
                "channels)".format(list(filt.shape), x.shape[axis_idx], x.shape[3], axis_idx, axis))
        if bias.shape != (x.shape[3],):
            raise ShapeError("depthwise_axis_conv: bias shape {} must equal [{}]".format(list(bias.shape),
                x.shape[3]))

        self.x, self.filt, self.axis = x, filt, axis

        if axis == AXIS_H:
            return np.einsum('nhwc,hc->nwc', x, filt)[:, None, :, :] + bias

        return np.einsum('nhwc,wc->nhc', x, filt)[:, :, None, :] + bias

    def backward(self, grad):
        grad_bias = grad.sum(axis=(0, 1, 2))

        if self.axis == AXIS_H:
            grad_squeezed = grad[:, 0]
            grad_x = grad_squeezed[:, None, :, :] * self.filt[None, :, None, :]
            grad_filt = np.einsum('nwc,nhwc->hc', grad_squeezed, self.x)
        else:
            grad_squeezed = grad[:, :, 0]
            grad_x = grad_squeezed[:, :, None, :] * self.filt[None, None, :, :]
            grad_filt = np.einsum('nhc,nhwc->wc', grad_squeezed, self.x)

        return grad_x, grad_filt, grad_bias


class Softmax(Function):
    """Softmax normalised jointly over a set of axes, computed with max-subtraction."""

    def forward(self, x, axes):
        self.axes = _normalize_axes(axes, x.ndim)
        shifted = x - np.max(x, axis=self.axes, keepdims=True)
        exps = np.exp(shifted)
        self.out = exps / np.sum(exps, axis=self.axes, keepdims=True)
        return self.out

    def backward(self, grad):
        return (self.out * (grad - np.sum(grad * self.out, axis=self.axes, keepdims=True)),)


class MaxPool2(Function):
    """2x2 max pooling with stride 2. The gradient is routed to the first maximum of every window."""

    def forward(self, x):
        n, h, w, c = x.shape

        for axis, extent in ((1, h), (2, w)):
            if extent % 2:
                raise ShapeError("maxpool2: odd extent {} on axis {}; pad the input to a multiple of 2^(depth-1) "
                    "before building the network input".format(extent, axis))

        windows = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
        self.argmax = np.argmax(windows, axis=-1)[..., None]
        self.in_shape = x.shape

        return np.take_along_axis(windows, self.argmax, axis=-1)[..., 0]

    def backward(self, grad):
        n, h, w, c = self.in_shape

        routed = np.zeros((n, h // 2, w // 2, c, 4), dtype=grad.dtype)
        np.put_along_axis(routed, self.argmax, grad[..., None], axis=-1)

        return (routed.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, h, w, c),)


class Upsample2(Function):
    """Nearest-neighbour 2x upsampling of both spatial axes."""

    def forward(self, x):
        return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)

    def backward(self, grad):
        n, h2, w2, c = grad.shape
        return (grad.reshape(n, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4)),)


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype)

    def backward(self, grad):
        return (grad * self.mask,)


class Sigmoid(Function):
    def forward(self, x):
        self.out = scipy.special.expit(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Dropout(Function):
    """Inverted dropout with a mask drawn from a dedicated seeded generator."""

    def forward(self, x, rate, seed):
        keep = np.random.default_rng(seed).random(x.shape) >= rate
        self.scaled_mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
        return x * self.scaled_mask

    def backward(self, grad):
        return (grad * self.scaled_mask,)


class Dense(Function):
    """Fully-connected layer [N,Cin] x [Cin,Cout] + [Cout]."""

    def forward(self, x, weights, bias):
        if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
            raise ShapeError("dense: input axis 1 extent {} does not match weight axis 0 extent {}".format(
                x.shape[-1], weights.shape[0]))
        if bias.shape != (weights.shape[1],):
            raise ShapeError("dense: bias shape {} must equal [{}]".format(list(bias.shape), weights.shape[1]))

        self.x, self.weights = x, weights
        return x @ weights + bias

    def backward(self, grad):
        return grad @ self.weights.T, self.x.T @ grad, grad.sum(axis=0)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, padding: str = PADDING_SAME, stride: int = 1) -> Tensor:
    return Conv2d.apply(x, kernel, bias, padding=padding, stride=int(stride))


def depthwise_axis_conv(x: Tensor, axis: str, filt: Tensor, bias: Tensor) -> Tensor:
    return DepthwiseAxisConv.apply(x, filt, bias, axis=axis)


def softmax(x: Tensor, axes) -> Tensor:
    return Softmax.apply(x, axes=axes)


def maxpool2(x: Tensor) -> Tensor:
    return MaxPool2.apply(x)


def upsample2(x: Tensor) -> Tensor:
    return Upsample2.apply(x)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def dropout(x: Tensor, rate: float, train_mode: bool, rng_seed: int) -> Tensor:
    """Zeroes elements with probability rate and scales survivors by 1/(1-rate) in train mode, identity otherwise.

    Parameters:
        x          Input tensor
        rate       Drop probability in [0, 1)
        train_mode Whether dropout is active
        rng_seed   Seed of the mask, identical seeds give identical masks

    Returns:
        Tensor Output tensor"""

    if not 0.0 <= rate < 1.0:
        raise ValueError("Dropout rate must be in [0, 1), got {}".format(rate))

    if not train_mode or rate == 0.0:
        return x

    return Dropout.apply(x, rate=float(rate), seed=int(rng_seed))


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    return Dense.apply(x, weights, bias)


def global_avg_pool(x: Tensor) -> Tensor:
    """Averages every channel over the spatial axes, [N,H,W,C] -> [N,1,1,C]."""

    return mean(x, axes=(1, 2), keepdims=True)
