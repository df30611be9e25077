"""
Squeeze-and-excitation attention blocks on [N,H,W,C] feature maps.

The MSE block adds two softmax-normalised branches:
    sSE  1x1 convolution to one map, softmax over all H*W positions, positions rescaled
    cSE  depth-wise squeeze of H then W with learned 1D filters, softmax over C, channels rescaled
No fully-connected layers are used, so the block is bound to a fixed (H, W, C).

The sigmoid-gated concurrent scSE block (global average pooling + two FC layers with reduction ratio 2 in the
channel branch) and the plain SE block are kept as baselines for the ablation.

Date: 2024-03-11
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

from dataclasses import dataclass

from common.exceptions import ShapeError
from tensor_engine import initializers
from tensor_engine.kernels import (conv2d, dense, depthwise_axis_conv, global_avg_pool, relu, sigmoid, softmax,
    AXIS_H, AXIS_W)
from tensor_engine.ops import add, mul, rescale, reshape
from tensor_engine.tensor import Tensor

ATTENTION_SCALE_NONE  = "none"
ATTENTION_SCALE_COUNT = "count"
ATTENTION_SCALES = [ATTENTION_SCALE_NONE, ATTENTION_SCALE_COUNT]

# Reduction ratio of the fully-connected bottleneck in the sigmoid baselines
FC_REDUCTION_RATIO = 2


def _check_bound(U: Tensor, expected: tuple, block: str) -> None:
    """Raises ShapeError when the feature map does not match the (H, W, C) a block is bound to."""

    if U.ndim != 4:
        raise ShapeError("{}: expected a [N,H,W,C] feature map, got {}".format(block, list(U.shape)))

    for axis, (actual, bound) in enumerate(zip(U.shape[1:], expected), start=1):
        if bound is not None and actual != bound:
            raise ShapeError("{}: feature map axis {} has extent {} but the block is bound to {} (H,W,C = {})".format(
                block, axis, actual, bound, list(expected)))


@dataclass
class MseBlockParams:
    """Parameters of one MSE block, bound to a fixed (H, W, C)."""
    sse_kernel:   Tensor        # [1,1,C,1] pixel-wise convolution
    sse_bias:     Tensor        # [1]
    cse_filter_h: Tensor        # [H,C] depth-wise squeeze of the H axis
    cse_filter_w: Tensor        # [W,C] depth-wise squeeze of the W axis
    cse_bias_h:   Tensor        # [C]
    cse_bias_w:   Tensor        # [C]
    attention_scale: str = ATTENTION_SCALE_NONE

    TENSOR_FIELDS = ("sse_kernel", "sse_bias", "cse_filter_h", "cse_filter_w", "cse_bias_h", "cse_bias_w")


    @property
    def bound_shape(self) -> tuple:
        return (self.cse_filter_h.shape[0], self.cse_filter_w.shape[0], self.cse_filter_h.shape[1])


    @staticmethod
    def expected_count(height: int, width: int, channels: int) -> int:
        """Closed-form parameter count (C+1) + C*H + C*W + 2C."""

        return (channels + 1) + channels * height + channels * width + 2 * channels


    @classmethod
    def initialize(cls, height: int, width: int, channels: int, seed: int, prefix: str,
        attention_scale: str = ATTENTION_SCALE_NONE) -> "MseBlockParams":
        """Creates the parameters: He-uniform pixel-wise kernel, averaging squeeze filters, zero biases.

        Parameters:
            height, width, channels Feature map shape the block is bound to
            seed                    Model seed
            prefix                  Name prefix keying the random streams
            attention_scale         none or count"""

        return cls(
            Tensor(initializers.he_uniform(seed, prefix + ".sse_kernel", (1, 1, channels, 1), channels)),
            Tensor(initializers.zeros((1,))),
            Tensor(initializers.averaging((height, channels))),
            Tensor(initializers.averaging((width, channels))),
            Tensor(initializers.zeros((channels,))),
            Tensor(initializers.zeros((channels,))),
            attention_scale
        )


    def named_tensors(self) -> dict:
        return {name: getattr(self, name) for name in self.TENSOR_FIELDS}


    def with_tensors(self, named: dict) -> "MseBlockParams":
        """Returns a copy whose tensors are replaced by the given name -> Tensor entries."""

        return MseBlockParams(*(named.get(name, getattr(self, name)) for name in self.TENSOR_FIELDS),
            attention_scale=self.attention_scale)


    def param_count(self) -> int:
        return int(sum(tensor.size for tensor in self.named_tensors().values()))


@dataclass
class SqueezeVector:
    """Channel weights of the cSE branch. Batched, both tensors have shape [N,1,1,C]."""
    z: Tensor       # Unnormalised weights
    w: Tensor       # softmax(z) over channels


def sse_branch(U: Tensor, params: MseBlockParams) -> Tensor:
    """Channel squeeze, spatial excitation: s = softmax over H*W of the 1x1 convolution, output = s * U."""

    _check_bound(U, params.bound_shape, "sse_branch")
    _, height, width, _ = U.shape

    spatial = softmax(conv2d(U, params.sse_kernel, params.sse_bias), axes=(1, 2))
    if params.attention_scale == ATTENTION_SCALE_COUNT:
        spatial = mul(spatial, float(height * width))

    return rescale(U, spatial)


def depthwise_squeeze(U: Tensor, filter_h: Tensor, bias_h: Tensor, filter_w: Tensor,
    bias_w: Tensor) -> SqueezeVector:
    """Learned spatial squeeze: a depth-wise H x 1 filter collapses H, then a depth-wise W x 1 filter collapses W,
    leaving one unnormalised weight per channel, normalised by softmax over channels. Shared by the cSE branch and
    the slice-wise compression."""

    collapsed_h = depthwise_axis_conv(U, AXIS_H, filter_h, bias_h)
    z = depthwise_axis_conv(collapsed_h, AXIS_W, filter_w, bias_w)

    return SqueezeVector(z, softmax(z, axes=3))


def cse_squeeze(U: Tensor, params: MseBlockParams) -> SqueezeVector:
    """Spatial squeeze of the cSE branch, z in R^C per sample and w = softmax(z)."""

    _check_bound(U, params.bound_shape, "cse_squeeze")

    return depthwise_squeeze(U, params.cse_filter_h, params.cse_bias_h, params.cse_filter_w, params.cse_bias_w)


def cse_branch(U: Tensor, params: MseBlockParams) -> Tensor:
    """Spatial squeeze, channel excitation: output[..., c] = w[c] * U[..., c]. Rescale only, no channel average."""

    weights = cse_squeeze(U, params).w
    if params.attention_scale == ATTENTION_SCALE_COUNT:
        weights = mul(weights, float(U.shape[3]))

    return rescale(U, weights)


def mse_block(U: Tensor, params: MseBlockParams) -> Tensor:
    """Modified squeeze-and-excitation block, sse_branch(U) + cse_branch(U)."""

    return add(sse_branch(U, params), cse_branch(U, params))


@dataclass
class ScseBlockParams:
    """Parameters of the sigmoid-gated concurrent scSE block, bound to the channel count only."""
    sse_kernel: Tensor      # [1,1,C,1]
    sse_bias:   Tensor      # [1]
    fc1_w:      Tensor      # [C,Cr]
    fc1_b:      Tensor      # [Cr]
    fc2_w:      Tensor      # [Cr,C]
    fc2_b:      Tensor      # [C]

    TENSOR_FIELDS = ("sse_kernel", "sse_bias", "fc1_w", "fc1_b", "fc2_w", "fc2_b")


    @property
    def channels(self) -> int:
        return self.fc1_w.shape[0]


    @staticmethod
    def reduced(channels: int) -> int:
        return max(1, channels // FC_REDUCTION_RATIO)


    @staticmethod
    def expected_count(channels: int) -> int:
        reduced = ScseBlockParams.reduced(channels)
        return (channels + 1) + channels * reduced + reduced + reduced * channels + channels


    @classmethod
    def initialize(cls, channels: int, seed: int, prefix: str) -> "ScseBlockParams":
        reduced = cls.reduced(channels)

        return cls(
            Tensor(initializers.he_uniform(seed, prefix + ".sse_kernel", (1, 1, channels, 1), channels)),
            Tensor(initializers.zeros((1,))),
            Tensor(initializers.he_uniform(seed, prefix + ".fc1_w", (channels, reduced), channels)),
            Tensor(initializers.zeros((reduced,))),
            Tensor(initializers.he_uniform(seed, prefix + ".fc2_w", (reduced, channels), reduced)),
            Tensor(initializers.zeros((channels,)))
        )


    def named_tensors(self) -> dict:
        return {name: getattr(self, name) for name in self.TENSOR_FIELDS}


    def with_tensors(self, named: dict) -> "ScseBlockParams":
        return ScseBlockParams(*(named.get(name, getattr(self, name)) for name in self.TENSOR_FIELDS))


    def param_count(self) -> int:
        return int(sum(tensor.size for tensor in self.named_tensors().values()))


@dataclass
class SeBlockParams:
    """Parameters of the plain SE block (channel branch of scSE only)."""
    fc1_w: Tensor
    fc1_b: Tensor
    fc2_w: Tensor
    fc2_b: Tensor

    TENSOR_FIELDS = ("fc1_w", "fc1_b", "fc2_w", "fc2_b")


    @property
    def channels(self) -> int:
        return self.fc1_w.shape[0]


    @classmethod
    def initialize(cls, channels: int, seed: int, prefix: str) -> "SeBlockParams":
        reduced = ScseBlockParams.reduced(channels)

        return cls(
            Tensor(initializers.he_uniform(seed, prefix + ".fc1_w", (channels, reduced), channels)),
            Tensor(initializers.zeros((reduced,))),
            Tensor(initializers.he_uniform(seed, prefix + ".fc2_w", (reduced, channels), reduced)),
            Tensor(initializers.zeros((channels,)))
        )


    def named_tensors(self) -> dict:
        return {name: getattr(self, name) for name in self.TENSOR_FIELDS}


    def param_count(self) -> int:
        return int(sum(tensor.size for tensor in self.named_tensors().values()))


def _sigmoid_channel_gate(U: Tensor, fc1_w: Tensor, fc1_b: Tensor, fc2_w: Tensor, fc2_b: Tensor) -> Tensor:
    """Global average pooling -> FC -> ReLU -> FC -> sigmoid, returned as [N,1,1,C] gates."""

    batch, _, _, channels = U.shape
    pooled = reshape(global_avg_pool(U), (batch, channels))
    gates = sigmoid(dense(relu(dense(pooled, fc1_w, fc1_b)), fc2_w, fc2_b))

    return reshape(gates, (batch, 1, 1, channels))


def se_block_baseline(U: Tensor, params: SeBlockParams) -> Tensor:
    """Plain squeeze-and-excitation: sigmoid channel gates from pooled FC layers rescale the channels."""

    _check_bound(U, (None, None, params.channels), "se_block_baseline")

    return rescale(U, _sigmoid_channel_gate(U, params.fc1_w, params.fc1_b, params.fc2_w, params.fc2_b))


def scse_block_baseline(U: Tensor, params: ScseBlockParams) -> Tensor:
    """Concurrent scSE with sigmoid gates, branches combined by addition."""

    _check_bound(U, (None, None, params.channels), "scse_block_baseline")

    spatial = rescale(U, sigmoid(conv2d(U, params.sse_kernel, params.sse_bias)))
    channel = rescale(U, _sigmoid_channel_gate(U, params.fc1_w, params.fc1_b, params.fc2_w, params.fc2_b))

    return add(spatial, channel)


def block_param_count(kind: str, height: int, width: int, channels: int) -> int:
    """Closed-form parameter count of an attention block kind (mse, cscse) at a resolution."""

    if kind == "mse":
        return MseBlockParams.expected_count(height, width, channels)
    if kind == "cscse":
        return ScseBlockParams.expected_count(channels)

    return 0

