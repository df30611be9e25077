"""
Attention blocks as network components: each block is bound to the feature map
shape of one resolution, registers its tensors under a name prefix and is
applied to a feature map given a name -> Tensor lookup.

Date: 2024-03-13
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

from typing import Mapping

from attention_blocks.blocks import (MseBlockParams, ScseBlockParams, SeBlockParams, mse_block, scse_block_baseline,
    se_block_baseline, ATTENTION_SCALE_NONE)
from common import defines
from tensor_engine.tensor import Tensor


class AttentionBlock:
    """Common part of the bound attention blocks."""

    KIND = None             # Block kind name used in parameter breakdowns
    PARAMS_CLASS = None     # Dataclass holding the block tensors

    def __init__(self, prefix: str, height: int, width: int, channels: int) -> None:
        self.prefix   = prefix      # Registry name prefix, e.g. enc2.attn
        self.height   = height
        self.width    = width
        self.channels = channels


    def tensor_names(self) -> list:
        return ["{}.{}".format(self.prefix, field) for field in self.PARAMS_CLASS.TENSOR_FIELDS]


    def initial_params(self, seed: int):
        raise NotImplementedError


    def register(self, registry, seed: int) -> None:
        """Creates the initial tensors and registers them in the attention section of the registry."""

        for field, tensor in self.initial_params(seed).named_tensors().items():
            registry.register("{}.{}".format(self.prefix, field), Tensor(tensor.data, requires_grad=True),
                defines.PARAM_SECTION_ATTENTION)


    def params(self, lookup: Mapping[str, Tensor]):
        return self.PARAMS_CLASS(*(lookup["{}.{}".format(self.prefix, field)]
            for field in self.PARAMS_CLASS.TENSOR_FIELDS))


    def __call__(self, U: Tensor, lookup: Mapping[str, Tensor]) -> Tensor:
        raise NotImplementedError


class MseBlock(AttentionBlock):
    KIND = "mse"
    PARAMS_CLASS = MseBlockParams

    def __init__(self, prefix: str, height: int, width: int, channels: int,
        attention_scale: str = ATTENTION_SCALE_NONE) -> None:
        super().__init__(prefix, height, width, channels)
        self.attention_scale = attention_scale


    def initial_params(self, seed: int) -> MseBlockParams:
        return MseBlockParams.initialize(self.height, self.width, self.channels, seed, self.prefix,
            self.attention_scale)


    def params(self, lookup: Mapping[str, Tensor]) -> MseBlockParams:
        params = super().params(lookup)
        params.attention_scale = self.attention_scale
        return params


    def __call__(self, U: Tensor, lookup: Mapping[str, Tensor]) -> Tensor:
        return mse_block(U, self.params(lookup))


class ScseBlock(AttentionBlock):
    KIND = "cscse"
    PARAMS_CLASS = ScseBlockParams

    def initial_params(self, seed: int) -> ScseBlockParams:
        return ScseBlockParams.initialize(self.channels, seed, self.prefix)


    def __call__(self, U: Tensor, lookup: Mapping[str, Tensor]) -> Tensor:
        return scse_block_baseline(U, self.params(lookup))


class SeBlock(AttentionBlock):
    KIND = "se"
    PARAMS_CLASS = SeBlockParams

    def initial_params(self, seed: int) -> SeBlockParams:
        return SeBlockParams.initialize(self.channels, seed, self.prefix)


    def __call__(self, U: Tensor, lookup: Mapping[str, Tensor]) -> Tensor:
        return se_block_baseline(U, self.params(lookup))


BLOCK_CLASSES = {block.KIND: block for block in (MseBlock, ScseBlock, SeBlock)}


def make_block(kind: str, prefix: str, height: int, width: int, channels: int,
    attention_scale: str = ATTENTION_SCALE_NONE) -> AttentionBlock:
    """Creates the bound block of a kind (mse, cscse, se)."""

    if kind not in BLOCK_CLASSES:
        raise ValueError("Unknown attention block kind \"{}\", expected one of {}".format(kind,
            list(BLOCK_CLASSES)))

    if kind == MseBlock.KIND:
        return MseBlock(prefix, height, width, channels, attention_scale)

    return BLOCK_CLASSES[kind](prefix, height, width, channels)
