"""
Tensor engine package: dense tensors, numerical kernels and reverse-mode
automatic differentiation used by every other package.

Date: 2024-03-07
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

from tensor_engine.settings import (set_precision, get_precision, get_dtype, set_anomaly_detection,
    anomaly_detection_enabled, precision)
from tensor_engine.tensor import Tensor, Function, AutodiffGraph, as_tensor
from tensor_engine.ops import add, sub, mul, div, bias_add, rescale, sum, mean, reshape, concat
from tensor_engine.kernels import (conv2d, depthwise_axis_conv, softmax, maxpool2, upsample2, relu, sigmoid,
    dropout, dense, global_avg_pool, AXIS_H, AXIS_W, PADDING_SAME, PADDING_VALID)
from tensor_engine.gradcheck import grad_check, GradCheckReport
