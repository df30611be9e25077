"""
Attention blocks: the softmax-normalised MSE block and the sigmoid SE/scSE baselines.

Date: 2024-03-11
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

from attention_blocks.blocks import (MseBlockParams, ScseBlockParams, SeBlockParams, SqueezeVector, sse_branch,
    depthwise_squeeze, cse_squeeze, cse_branch, mse_block, scse_block_baseline, se_block_baseline, block_param_count,
    ATTENTION_SCALES, ATTENTION_SCALE_NONE, ATTENTION_SCALE_COUNT, FC_REDUCTION_RATIO)
from attention_blocks.modules import AttentionBlock, MseBlock, ScseBlock, SeBlock, BLOCK_CLASSES, make_block
