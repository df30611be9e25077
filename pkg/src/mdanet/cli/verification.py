"""
Gradient verification suites run by the gradcheck command. Every check draws
random inputs and parameters from the command seed and runs in 64-bit.

Date: 2024-03-20
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import logging
import numpy as np

from tqdm import tqdm

from attention_blocks.blocks import (MseBlockParams, ScseBlockParams, SeBlockParams, cse_branch, mse_block,
    scse_block_baseline, se_block_baseline, sse_branch, ATTENTION_SCALE_COUNT, ATTENTION_SCALE_NONE)
from common import defines
from common.seeding import make_rng
from segnet.model_config import ModelConfig
from segnet.network import SegNet
from slice_compression.compression import CompressionConfig, CompressionParams, compress_batch
from tensor_engine import kernels, ops, settings
from tensor_engine.gradcheck import GradCheckReport, grad_check
from tensor_engine.tensor import Tensor
from train_eval.dice import dice_loss, one_hot

logger = logging.getLogger(__name__)

# Feature map shape [N, H, W, C] of the block checks
BLOCK_SHAPE = (2, 4, 5, 3)


def _random(rng: np.random.Generator, shape: tuple, scale: float = 1.0) -> Tensor:
    return Tensor(rng.normal(0.0, scale, size=shape))


def op_checks(seed: int) -> dict:
    """name -> (function, inputs) of the differentiable tensor operations."""

    rng = make_rng(seed, "gradcheck", "ops")
    x = _random(rng, (2, 4, 6, 3))
    positive = Tensor(rng.uniform(0.5, 2.0, size=(2, 4, 6, 3)))

    return {
        'add': (ops.add, [x, _random(rng, x.shape)]),
        'sub': (ops.sub, [x, _random(rng, x.shape)]),
        'mul': (ops.mul, [x, _random(rng, x.shape)]),
        'div': (ops.div, [x, positive]),
        'bias_add': (ops.bias_add, [x, _random(rng, (3,))]),
        'rescale_channel': (ops.rescale, [x, _random(rng, (2, 1, 1, 3))]),
        'rescale_spatial': (ops.rescale, [x, _random(rng, (2, 4, 6, 1))]),
        'sum': (lambda t: ops.sum(t, axes=(1, 2)), [x]),
        'mean': (lambda t: ops.mean(t, axes=3, keepdims=True), [x]),
        'reshape': (lambda t: ops.reshape(t, (2, 72)), [x]),
        'concat': (lambda a, b: ops.concat([a, b], axis=3), [x, _random(rng, (2, 4, 6, 2))]),
        'conv2d': (kernels.conv2d, [x, _random(rng, (3, 3, 3, 2)), _random(rng, (2,))]),
        'conv2d_even': (kernels.conv2d, [x, _random(rng, (2, 2, 3, 2)), _random(rng, (2,))]),
        'conv2d_strided': (lambda a, k, b: kernels.conv2d(a, k, b, stride=2),
            [x, _random(rng, (3, 3, 3, 2)), _random(rng, (2,))]),
        'depthwise_h': (lambda a, f, b: kernels.depthwise_axis_conv(a, kernels.AXIS_H, f, b),
            [x, _random(rng, (4, 3)), _random(rng, (3,))]),
        'depthwise_w': (lambda a, f, b: kernels.depthwise_axis_conv(a, kernels.AXIS_W, f, b),
            [x, _random(rng, (6, 3)), _random(rng, (3,))]),
        'softmax_channels': (lambda t: kernels.softmax(t, axes=3), [x]),
        'softmax_spatial': (lambda t: kernels.softmax(t, axes=(1, 2)), [x]),
        'maxpool2': (kernels.maxpool2, [x]),
        'upsample2': (kernels.upsample2, [x]),
        'relu': (kernels.relu, [x]),
        'sigmoid': (kernels.sigmoid, [x]),
        'dropout': (lambda t: kernels.dropout(t, 0.3, True, seed), [x]),
        'dense': (kernels.dense, [_random(rng, (4, 5)), _random(rng, (5, 3)), _random(rng, (3,))]),
        'global_avg_pool': (kernels.global_avg_pool, [x])
    }


def _block_inputs(params, U: Tensor) -> dict:
    named = {'U': U}
    named.update(params.named_tensors())
    return named


def block_checks(seed: int) -> dict:
    """name -> (function, named inputs) of every attention block and branch."""

    rng = make_rng(seed, "gradcheck", "block")
    U = _random(rng, BLOCK_SHAPE)
    _, height, width, channels = BLOCK_SHAPE
    checks = {}

    for scale in (ATTENTION_SCALE_NONE, ATTENTION_SCALE_COUNT):
        mse = MseBlockParams.initialize(height, width, channels, seed, "check", scale)
        # Random squeeze filters instead of the averaging initialisation
        mse = mse.with_tensors({'cse_filter_h': _random(rng, (height, channels)),
            'cse_filter_w': _random(rng, (width, channels)), 'cse_bias_h': _random(rng, (channels,)),
            'cse_bias_w': _random(rng, (channels,)), 'sse_bias': _random(rng, (1,))})

        for name, block in (("sse_branch", sse_branch), ("cse_branch", cse_branch), ("mse_block", mse_block)):
            def apply(U, *tensors, block=block, params=mse):
                return block(U, params.with_tensors(dict(zip(MseBlockParams.TENSOR_FIELDS, tensors))))

            checks["{}_{}".format(name, scale)] = (apply, _block_inputs(mse, U))

    scse = ScseBlockParams.initialize(channels, seed, "check")
    checks['scse_block'] = (lambda U, *tensors: scse_block_baseline(U,
        scse.with_tensors(dict(zip(ScseBlockParams.TENSOR_FIELDS, tensors)))), _block_inputs(scse, U))

    se = SeBlockParams.initialize(channels, seed, "check")
    checks['se_block'] = (lambda U, *tensors: se_block_baseline(U, SeBlockParams(*tensors)), _block_inputs(se, U))

    return checks


def compression_checks(seed: int) -> dict:
    """Compression filters checked through a downstream loss."""

    rng = make_rng(seed, "gradcheck", "compression")
    cfg = CompressionConfig(radius=2)
    height, width = 6, 5
    diffs = rng.normal(size=(3, height, width, cfg.channels))
    params = CompressionParams.initialize(height, width, cfg.radius)
    params = params.with_tensors({'filter_h': _random(rng, (height, cfg.channels)),
        'filter_w': _random(rng, (width, cfg.channels))})
    target = Tensor(rng.normal(size=(3, height, width)))

    def loss(*tensors):
        compressed = compress_batch(diffs, CompressionParams(*tensors))
        residual = ops.sub(compressed, target)
        return ops.sum(ops.mul(residual, residual))

    return {'compress': (loss, params.named_tensors())}


def network_checks(seed: int) -> dict:
    """Every variant at depth 2 on 8x8 slices, checked through the Dice loss."""

    rng = make_rng(seed, "gradcheck", "network")
    checks = {}
    slices = rng.uniform(size=(2, 8, 8))
    targets = one_hot(rng.integers(0, 4, size=(2, 8, 8)), 4)

    for variant in defines.VARIANTS:
        config = ModelConfig(variant=variant, depth=2, base_channels=2, num_classes=4, dropout_rate=0.0,
            input_shape=(8, 8), compression=CompressionConfig(radius=1) if variant == defines.VARIANT_MDA else None)
        net = SegNet.build(config, seed)
        names = net.params.names()
        diffs = rng.normal(size=(2, 8, 8, 2)) if variant == defines.VARIANT_MDA else None

        def loss(*tensors, net=net, names=names, diffs=diffs):
            overrides = dict(zip(names, tensors))
            return dice_loss(net.predict_proba(slices, diffs, params=overrides), targets)

        checks[variant] = (loss, net.params.lookup())

    return checks


SCOPES = {
    'ops': op_checks,
    'block': block_checks,
    'compression': compression_checks,
    'network': network_checks
}

# Runs every scope above, check names are prefixed with their scope
SCOPE_ALL = "all"


def run_gradchecks(scope: str, seed: int = 0, tol: float = 1e-4, max_entries: int | None = None,
    progress: bool = True) -> dict:
    """Runs the checks of one scope in 64-bit precision.

    Parameters:
        scope       ops, block, compression, network or all
        seed        Seed of inputs and parameters
        tol         Maximum accepted relative error
        max_entries Entries per tensor for the network scope, None for all
        progress    Show a progress bar

    Raises:
        ValueError on an unknown scope

    Returns:
        dict check name -> GradCheckReport"""

    if scope != SCOPE_ALL and scope not in SCOPES:
        raise ValueError("Unknown gradcheck scope \"{}\", expected one of {}".format(scope,
            list(SCOPES) + [SCOPE_ALL]))

    scopes = list(SCOPES) if scope == SCOPE_ALL else [scope]
    reports = {}

    with settings.precision("f64"):
        checks = []
        for current in scopes:
            for name, (function, inputs) in SCOPES[current](seed).items():
                label = "{}/{}".format(current, name) if scope == SCOPE_ALL else name
                checks.append((label, current, function, inputs))

        for name, current, function, inputs in tqdm(checks, desc="gradcheck {}".format(scope),
            disable=not progress, leave=False):
            report: GradCheckReport = grad_check(function, inputs, tol=tol, seed=seed,
                max_entries=max_entries if current == 'network' else None)
            reports[name] = report
            logger.info("%s: max relative error %.3e over %d entries, %s", name, report.max_rel_error,
                report.entries, "passed" if report.passed else "FAILED")

    return reports
