"""
Segmentation networks: plain U-Net, cscSE-UNet, MSE-UNet and MDA-Net.

Date: 2024-03-14
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

from segnet.model_config import ModelConfig, VARIANT_BLOCK_KIND
from segnet.registry import ParamRegistry
from segnet.network import SegNet, argmax_labels, COMPRESSION_PREFIX
from segnet.paramcount import (ParamCountReport, param_count, count_variant, expected_attention_count,
    expected_compression_count, topology_assumptions)
from segnet.checkpoint import save_checkpoint, load_checkpoint, read_manifest, CHECKPOINT_MAGIC
