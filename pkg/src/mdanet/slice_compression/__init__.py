"""
Slice-wise compression of ordered difference images into a second input channel.

Date: 2024-03-12
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

from slice_compression.compression import (CompressionConfig, CompressionParams, DiffStack, OrderedDiffCache,
    neighbour_index, neighborhood_diffs, order_by_l1, compression_weights, compress_batch, compress,
    make_input_batch, make_input_pair, BOUNDARY_POLICIES, BOUNDARY_MIRROR, BOUNDARY_CLAMP, BOUNDARY_ZERO, ORDERINGS,
    ORDERING_DESCENDING, ORDERING_ASCENDING)
