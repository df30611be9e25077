"""
Tests of the attention blocks against loop oracles, their normalisation and
parameter bookkeeping.

Date: 2024-03-21
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import numpy as np
import pytest

from numpy.testing import assert_allclose, assert_array_equal

from attention_blocks import (ATTENTION_SCALE_COUNT, MseBlock, MseBlockParams, ScseBlock, ScseBlockParams,
    SeBlockParams, cse_branch, cse_squeeze, make_block, mse_block, scse_block_baseline, se_block_baseline,
    sse_branch)
from cli.verification import run_gradchecks
from common.exceptions import ShapeError
from segnet.registry import ParamRegistry
from tensor_engine import Tensor, add


def random_mse_params(rng, height, width, channels, attention_scale="none") -> MseBlockParams:
    return MseBlockParams(
        Tensor(rng.normal(size=(1, 1, channels, 1))),
        Tensor(rng.normal(size=(1,))),
        Tensor(rng.normal(size=(height, channels))),
        Tensor(rng.normal(size=(width, channels))),
        Tensor(rng.normal(size=(channels,))),
        Tensor(rng.normal(size=(channels,))),
        attention_scale
    )


def sse_oracle(U, params: MseBlockParams):
    n, h, w, c = U.shape
    kernel = params.sse_kernel.data[0, 0, :, 0]
    out = np.zeros_like(U)

    for b in range(n):
        logits = np.zeros((h, w))
        for i in range(h):
            for j in range(w):
                logits[i, j] = params.sse_bias.data[0] + sum(U[b, i, j, k] * kernel[k] for k in range(c))
        weights = np.exp(logits - logits.max())
        weights /= weights.sum()
        for i in range(h):
            for j in range(w):
                out[b, i, j, :] = weights[i, j] * U[b, i, j, :]

    return out


def cse_oracle(U, params: MseBlockParams):
    n, h, w, c = U.shape
    filt_h, filt_w = params.cse_filter_h.data, params.cse_filter_w.data
    bias_h, bias_w = params.cse_bias_h.data, params.cse_bias_w.data
    out = np.zeros_like(U)

    for b in range(n):
        z = np.zeros(c)
        for k in range(c):
            total = bias_w[k]
            for j in range(w):
                column = bias_h[k] + sum(U[b, i, j, k] * filt_h[i, k] for i in range(h))
                total += filt_w[j, k] * column
            z[k] = total
        weights = np.exp(z - z.max())
        weights /= weights.sum()
        out[b] = U[b] * weights

    return out


def test_sse_branch_matches_loop_oracle(f64, rng):
    U = rng.normal(size=(2, 4, 5, 3))
    params = random_mse_params(rng, 4, 5, 3)

    assert_allclose(sse_branch(Tensor(U), params).data, sse_oracle(U, params), rtol=1e-12, atol=1e-14)


def test_cse_branch_matches_loop_oracle(f64, rng):
    U = rng.normal(size=(2, 4, 5, 3))
    params = random_mse_params(rng, 4, 5, 3)

    assert_allclose(cse_branch(Tensor(U), params).data, cse_oracle(U, params), rtol=1e-12, atol=1e-14)


def test_mse_block_is_sum_of_branches(f64, rng):
    U = rng.normal(size=(1, 3, 3, 2))
    params = random_mse_params(rng, 3, 3, 2)

    assert_allclose(mse_block(Tensor(U), params).data, sse_oracle(U, params) + cse_oracle(U, params), rtol=1e-12,
        atol=1e-14)


def test_mse_block_adds_branch_outputs_exactly(rng):
    U = Tensor(rng.normal(size=(2, 4, 5, 3)))
    params = random_mse_params(rng, 4, 5, 3)

    assert_array_equal(mse_block(U, params).data, add(sse_branch(U, params), cse_branch(U, params)).data)


def test_channel_branch_follows_channel_permutation(f64, rng):
    U = rng.normal(size=(2, 4, 5, 3))
    params = random_mse_params(rng, 4, 5, 3)
    perm = np.array([2, 0, 1])
    permuted = params.with_tensors({
        'cse_filter_h': Tensor(params.cse_filter_h.data[:, perm]),
        'cse_filter_w': Tensor(params.cse_filter_w.data[:, perm]),
        'cse_bias_h': Tensor(params.cse_bias_h.data[perm]),
        'cse_bias_w': Tensor(params.cse_bias_w.data[perm])
    })

    weights = cse_squeeze(Tensor(U), params).w.data
    permuted_weights = cse_squeeze(Tensor(U[..., perm]), permuted).w.data

    assert_allclose(permuted_weights, weights[..., perm], rtol=1e-12)
    assert_allclose(cse_branch(Tensor(U[..., perm]), permuted).data, cse_branch(Tensor(U), params).data[..., perm],
        rtol=1e-12, atol=1e-14)


def test_count_scale_multiplies_weights(f64, rng):
    U = rng.normal(size=(1, 4, 5, 3))
    plain = random_mse_params(rng, 4, 5, 3)
    scaled = MseBlockParams(*plain.named_tensors().values(), attention_scale=ATTENTION_SCALE_COUNT)

    assert_allclose(sse_branch(Tensor(U), scaled).data, 20.0 * sse_branch(Tensor(U), plain).data, rtol=1e-12)
    assert_allclose(cse_branch(Tensor(U), scaled).data, 3.0 * cse_branch(Tensor(U), plain).data, rtol=1e-12)


def test_single_pixel_single_channel_block_doubles_input(f64, rng):
    U = rng.normal(size=(3, 1, 1, 1))
    params = random_mse_params(rng, 1, 1, 1, ATTENTION_SCALE_COUNT)

    assert_allclose(mse_block(Tensor(U), params).data, 2.0 * U, rtol=1e-12)


def test_squeeze_weights_sum_to_one(rng):
    for _ in range(1000):
        U = rng.normal(scale=3.0, size=(2, 3, 4, 5))
        params = random_mse_params(rng, 3, 4, 5)
        squeeze = cse_squeeze(Tensor(U), params)

        assert squeeze.w.shape == (2, 1, 1, 5)
        assert_allclose(squeeze.w.data.sum(axis=3), 1.0, atol=1e-6)


def test_block_rejects_unbound_feature_map(rng):
    params = MseBlockParams.initialize(4, 5, 3, 0, "enc0.attn")

    with pytest.raises(ShapeError, match="axis 2"):
        mse_block(Tensor(rng.normal(size=(1, 4, 6, 3))), params)


def test_initial_squeeze_filters_average(f64, rng):
    U = rng.normal(size=(1, 4, 5, 3))
    params = MseBlockParams.initialize(4, 5, 3, 0, "enc0.attn")
    z = cse_squeeze(Tensor(U), params).z.data.reshape(-1)

    assert_allclose(z, U[0].mean(axis=(0, 1)), rtol=1e-12)


def test_mse_param_count_closed_form():
    params = MseBlockParams.initialize(4, 5, 3, 0, "enc0.attn")

    assert MseBlockParams.expected_count(4, 5, 3) == 37
    assert params.param_count() == 37


def test_scse_param_count_uses_reduction_ratio_two():
    params = ScseBlockParams.initialize(4, 0, "enc0.attn")

    assert ScseBlockParams.reduced(4) == 2
    assert ScseBlockParams.expected_count(4) == 27
    assert params.param_count() == 27


def test_sigmoid_baselines_keep_shape(rng):
    U = Tensor(rng.normal(size=(2, 3, 3, 4)))

    assert scse_block_baseline(U, ScseBlockParams.initialize(4, 0, "b")).shape == (2, 3, 3, 4)
    assert se_block_baseline(U, SeBlockParams.initialize(4, 0, "b")).shape == (2, 3, 3, 4)


def test_bound_block_registers_its_tensors(rng):
    registry = ParamRegistry()
    block = make_block("mse", "enc1.attn", 4, 5, 3)
    block.register(registry, 0)

    assert isinstance(block, MseBlock)
    assert registry.names() == ["enc1.attn.{}".format(field) for field in MseBlockParams.TENSOR_FIELDS]
    assert registry.count("attention") == MseBlockParams.expected_count(4, 5, 3)
    assert all(registry[name].requires_grad for name in registry.names())
    assert block(Tensor(rng.normal(size=(2, 4, 5, 3))), registry.lookup()).shape == (2, 4, 5, 3)


def test_block_initialisation_depends_on_name_only():
    first, second = ParamRegistry(), ParamRegistry()
    ScseBlock("dec0.attn", 4, 4, 6).register(first, 3)
    ScseBlock("dec0.attn", 8, 8, 6).register(second, 3)

    for name in first.names():
        assert np.array_equal(first[name].data, second[name].data)


def test_unknown_block_kind():
    with pytest.raises(ValueError):
        make_block("cbam", "enc0.attn", 4, 4, 2)


@pytest.mark.parametrize("seed", range(3))
def test_block_gradients(seed):
    reports = run_gradchecks("block", seed, progress=False)

    assert reports
    for name, report in reports.items():
        assert report.passed, "{}: {:.3e}".format(name, report.max_rel_error)
