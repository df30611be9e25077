"""
U-Net encoder-decoder with optional attention after every convolution pair and
an optional slice-compression front end.

Per level the network applies two 3x3 same-padding convolutions with ReLU, the
variant's attention block and dropout. Levels are connected by 2x2 max pooling
on the way down and by nearest-neighbour upsampling followed by a 2x2
convolution on the way up, the decoder concatenating the encoder output of the
same level. A 1x1 convolution and a softmax over classes form the head.

Date: 2024-03-14
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import logging
import numpy as np

from dataclasses import replace
from typing import Mapping

from attention_blocks.modules import AttentionBlock, make_block
from common import defines
from common.exceptions import ModelConfigError, ShapeError
from common.seeding import derive_seed
from segnet.model_config import ModelConfig
from segnet.registry import ParamRegistry
from slice_compression.compression import CompressionParams, make_input_batch
from tensor_engine import initializers
from tensor_engine.kernels import conv2d, dropout, maxpool2, relu, softmax, upsample2
from tensor_engine.ops import concat
from tensor_engine.tensor import Tensor

logger = logging.getLogger(__name__)

COMPRESSION_PREFIX = "compression"


def _conv_names(prefix: str) -> tuple:
    return prefix + ".kernel", prefix + ".bias"


class SegNet:
    """Network of one variant together with its parameter registry."""

    def __init__(self, config: ModelConfig, params: ParamRegistry) -> None:
        self.config = config        # Topology
        self.params = params        # Named parameter tensors
        self.blocks = {}            # Level prefix (enc<l> / dec<l>) -> bound attention block

        if config.block_kind is not None:
            for prefix, level in self.levels():
                height, width = config.resolution(level)
                self.blocks[prefix] = make_block(config.block_kind, prefix + ".attn", height, width,
                    config.channels(level), config.attention_scale)


    def levels(self) -> list:
        """(prefix, level) of every resolution that ends with a convolution pair, encoder first."""

        depth = self.config.depth

        return [("enc{}".format(level), level) for level in range(depth)] + \
            [("dec{}".format(level), level) for level in reversed(range(depth - 1))]


    @classmethod
    def build(cls, config: ModelConfig, rng_seed: int = 0) -> "SegNet":
        """Creates the network and initialises its parameters. Every tensor draws from a stream derived from
        (rng_seed, tensor name), so equally named tensors agree across variants.

        Parameters:
            config   Network configuration
            rng_seed Initialisation seed

        Raises:
            ModelConfigError for invalid configurations

        Returns:
            SegNet Initialised network"""

        config.validate()
        net = cls(config, ParamRegistry())

        def register_conv(prefix: str, kh: int, kw: int, c_in: int, c_out: int) -> None:
            kernel_name, bias_name = _conv_names(prefix)
            net.params.register(kernel_name, Tensor(initializers.he_uniform(rng_seed, kernel_name,
                (kh, kw, c_in, c_out), kh * kw * c_in), requires_grad=True))
            net.params.register(bias_name, Tensor(initializers.zeros((c_out,)), requires_grad=True))

        # Encoder, the deepest level is the bottleneck
        c_in = config.in_channels
        for level in range(config.depth):
            c_out = config.channels(level)
            register_conv("enc{}.conv1".format(level), 3, 3, c_in, c_out)
            register_conv("enc{}.conv2".format(level), 3, 3, c_out, c_out)
            c_in = c_out

        # Decoder
        for level in reversed(range(config.depth - 1)):
            c_out = config.channels(level)
            register_conv("dec{}.up".format(level), 2, 2, config.channels(level + 1), c_out)
            register_conv("dec{}.conv1".format(level), 3, 3, 2 * c_out, c_out)
            register_conv("dec{}.conv2".format(level), 3, 3, c_out, c_out)

        register_conv("head", 1, 1, config.base_channels, config.num_classes)

        for block in net.blocks.values():
            block.register(net.params, rng_seed)

        if config.compression is not None:
            height, width = config.input_shape
            compression = CompressionParams.initialize(height, width, config.compression.radius)
            for name, tensor in compression.named_tensors().items():
                net.params.register("{}.{}".format(COMPRESSION_PREFIX, name),
                    Tensor(tensor.data, requires_grad=True), defines.PARAM_SECTION_COMPRESSION)

        logger.debug("Built %s network with %d parameters", config.variant, net.params.count())

        return net


    def compression_params(self, lookup: Mapping[str, Tensor] | None = None) -> CompressionParams | None:
        if self.config.compression is None:
            return None

        lookup = lookup if lookup is not None else self.params.lookup()

        return CompressionParams(*(lookup["{}.{}".format(COMPRESSION_PREFIX, name)]
            for name in CompressionParams.TENSOR_FIELDS))


    def input_batch(self, slices: np.ndarray, ordered_diffs: np.ndarray | None = None,
        params: Mapping[str, Tensor] | None = None) -> Tensor:
        """Network input [N, m, n, in_channels] from slices [N, m, n] and, for mda, ordered difference stacks
        [N, m, n, 2r]. The compressed channel stays connected to the compression parameters."""

        if slices.ndim != 3:
            raise ShapeError("Slice batch must be [N, m, n], got {}".format(list(slices.shape)))

        if self.config.compression is None:
            return Tensor(slices[..., None])

        if ordered_diffs is None:
            raise ShapeError("Variant mda needs the ordered difference stacks of every slice")

        return make_input_batch(slices, ordered_diffs, self.compression_params(self.params.lookup(params)))


    def _conv(self, x: Tensor, lookup: Mapping[str, Tensor], prefix: str) -> Tensor:
        kernel_name, bias_name = _conv_names(prefix)
        return conv2d(x, lookup[kernel_name], lookup[bias_name])


    def _level(self, x: Tensor, lookup: Mapping[str, Tensor], prefix: str, train_mode: bool, seed: int) -> Tensor:
        """Convolution pair, attention and dropout of one resolution."""

        x = relu(self._conv(x, lookup, prefix + ".conv1"))
        x = relu(self._conv(x, lookup, prefix + ".conv2"))

        block: AttentionBlock | None = self.blocks.get(prefix)
        if block is not None:
            x = block(x, lookup)

        return dropout(x, self.config.dropout_rate, train_mode, derive_seed(seed, prefix, "dropout"))


    def forward(self, x: Tensor, train_mode: bool = False, seed: int = 0,
        params: Mapping[str, Tensor] | None = None) -> Tensor:
        """Class probabilities of a batch.

        Parameters:
            x          Input [N, m, n, in_channels] with (m, n) equal to the configured input shape
            train_mode Enables dropout
            seed       Seed of the dropout masks, ignored in eval mode
            params     Optional name -> Tensor replacements of registered parameters

        Returns:
            Tensor [N, m, n, num_classes] probabilities summing to one over the last axis"""

        config = self.config

        if x.ndim != 4:
            raise ShapeError("Network input must be [N, m, n, C], got {}".format(list(x.shape)))
        if x.shape[3] != config.in_channels:
            raise ShapeError("Network input axis 3 has {} channels but variant {} expects {}".format(x.shape[3],
                config.variant, config.in_channels))
        if self.blocks or config.compression is not None:
            for axis in (1, 2):
                if x.shape[axis] != config.input_shape[axis - 1]:
                    raise ShapeError("Network input axis {} has extent {} but the parameters are bound to {}"
                        .format(axis, x.shape[axis], config.input_shape[axis - 1]))

        lookup = self.params.lookup(params)
        skips = []

        for level in range(config.depth):
            if level > 0:
                x = maxpool2(x)
            x = self._level(x, lookup, "enc{}".format(level), train_mode, seed)
            skips.append(x)

        for level in reversed(range(config.depth - 1)):
            up = relu(self._conv(upsample2(x), lookup, "dec{}.up".format(level)))
            x = self._level(concat([skips[level], up], axis=3), lookup, "dec{}".format(level), train_mode, seed)

        return softmax(self._conv(x, lookup, "head"), axes=3)


    def predict_proba(self, slices: np.ndarray, ordered_diffs: np.ndarray | None = None, train_mode: bool = False,
        seed: int = 0, params: Mapping[str, Tensor] | None = None) -> Tensor:
        """Class probabilities of a batch of raw slices, building the input channels first."""

        return self.forward(self.input_batch(slices, ordered_diffs, params), train_mode, seed, params)


    def backbone_only(self) -> "SegNet":
        """Plain network sharing this network's backbone tensors, i.e. the same network with the attention blocks
        removed.

        Raises:
            ModelConfigError for mda, whose backbone consumes two input channels"""

        if self.config.variant == defines.VARIANT_MDA:
            raise ModelConfigError("Variant mda has a two-channel backbone without a plain counterpart")

        config = replace(self.config, variant=defines.VARIANT_PLAIN, compression=None)

        return SegNet(config, self.params.subset([defines.PARAM_SECTION_BACKBONE]))


def argmax_labels(probabilities: Tensor) -> np.ndarray:
    """Per-pixel class labels [N, m, n] of a probability batch [N, m, n, K]."""

    return np.argmax(probabilities.data, axis=-1).astype(np.uint8)
