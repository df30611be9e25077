"""
Parameter audit of a network: exact totals from the registry, a breakdown per
section and per attention block, closed-form expectations and the record of
topology assumptions the counts depend on.

Date: 2024-03-15
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

from dataclasses import dataclass, field

from attention_blocks.blocks import FC_REDUCTION_RATIO, block_param_count
from common import defines
from segnet.model_config import ModelConfig
from segnet.network import SegNet
from slice_compression.compression import CompressionParams


@dataclass
class ParamCountReport:
    """Result of param_count()."""
    variant:     str
    total:       int
    breakdown:   dict = field(default_factory=dict)     # section -> count
    blocks:      dict = field(default_factory=dict)     # attention block prefix -> count
    assumptions: dict = field(default_factory=dict)     # topology choices the counts rest on


    def lines(self) -> list:
        """Human-readable report, one entry per line."""

        lines = ["variant: {}".format(self.variant), "total: {:,}".format(self.total)]
        lines += ["  {}: {:,}".format(section, count) for section, count in self.breakdown.items()]
        lines += ["    {}: {:,}".format(prefix, count) for prefix, count in self.blocks.items()]
        lines += ["assumption {}: {}".format(key, value) for key, value in self.assumptions.items()]

        return lines


def topology_assumptions(config: ModelConfig) -> dict:
    return {
        'depth': config.depth,
        'base_channels': config.base_channels,
        'input_shape': list(config.input_shape),
        'decoder_upsampling': "nearest upsample + 2x2 conv",
        'attention_resolutions': 2 * config.depth - 1,
        'cscse_reduction_ratio': FC_REDUCTION_RATIO,
        'batch_normalization': False
    }


def param_count(net: SegNet) -> ParamCountReport:
    """Counts the parameters of a network.

    Parameters:
        net Network to audit

    Returns:
        ParamCountReport Exact sum of the registry tensor sizes with its breakdown"""

    registry = net.params
    report = ParamCountReport(net.config.variant, registry.count(),
        {section: registry.count(section) for section in defines.PARAM_SECTIONS},
        assumptions=topology_assumptions(net.config))

    for block in net.blocks.values():
        report.blocks[block.prefix] = int(sum(registry[name].size for name in block.tensor_names()))

    return report


def expected_attention_count(config: ModelConfig) -> int:
    """Closed-form attention parameter count summed over all resolutions."""

    if config.block_kind is None:
        return 0

    total = 0
    for level in list(range(config.depth)) + list(range(config.depth - 1)):
        height, width = config.resolution(level)
        total += block_param_count(config.block_kind, height, width, config.channels(level))

    return total


def expected_compression_count(config: ModelConfig) -> int:
    """Closed-form compression parameter count 2r(m+n) + 4r, zero without compression."""

    if config.compression is None:
        return 0

    height, width = config.input_shape

    return CompressionParams.expected_count(height, width, config.compression.radius)


def count_variant(config: ModelConfig, variant: str, rng_seed: int = 0) -> ParamCountReport:
    """Builds the given variant of a topology and audits it."""

    return param_count(SegNet.build(config.with_variant(variant), rng_seed))
