"""
Tests of the tensor engine: kernel oracles, gradients, softmax, dropout and
the engine settings.

Date: 2024-03-21
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import numpy as np
import pytest

from numpy.testing import assert_allclose, assert_array_equal

from cli.verification import op_checks, run_gradchecks
from common.exceptions import NumericalError, ShapeError
from tensor_engine import (AXIS_H, AXIS_W, AutodiffGraph, PADDING_VALID, Tensor, add, bias_add, concat, conv2d,
    depthwise_axis_conv, dropout, grad_check, maxpool2, mean, mul, relu, rescale, settings, softmax, sum, upsample2)


def conv2d_oracle(x, kernel, bias, pad_top, pad_left, out_h, out_w):
    n, h, w, c_in = x.shape
    kh, kw, _, c_out = kernel.shape
    out = np.zeros((n, out_h, out_w, c_out))

    for b in range(n):
        for i in range(out_h):
            for j in range(out_w):
                for o in range(c_out):
                    total = bias[o]
                    for di in range(kh):
                        for dj in range(kw):
                            row, col = i + di - pad_top, j + dj - pad_left
                            if 0 <= row < h and 0 <= col < w:
                                for c in range(c_in):
                                    total += x[b, row, col, c] * kernel[di, dj, c, o]
                    out[b, i, j, o] = total

    return out


def test_conv2d_matches_loop_oracle(f64, rng):
    x = rng.normal(size=(2, 7, 8, 3))
    kernel = rng.normal(size=(3, 3, 3, 4))
    bias = rng.normal(size=4)

    out = conv2d(Tensor(x), Tensor(kernel), Tensor(bias))

    assert out.shape == (2, 7, 8, 4)
    assert_allclose(out.data, conv2d_oracle(x, kernel, bias, 1, 1, 7, 8), rtol=1e-12, atol=1e-12)


def test_conv2d_is_linear(f64, rng):
    x, y = rng.normal(size=(2, 2, 6, 5, 3))
    kernel = Tensor(rng.normal(size=(3, 3, 3, 2)))
    bias = Tensor(np.zeros(2))
    a, b = 1.7, -0.4

    combined = conv2d(Tensor(a * x + b * y), kernel, bias).data
    separate = a * conv2d(Tensor(x), kernel, bias).data + b * conv2d(Tensor(y), kernel, bias).data

    assert_allclose(combined, separate, rtol=1e-10, atol=1e-12)


def test_conv2d_even_kernel_pads_after(f64, rng):
    x = rng.normal(size=(1, 4, 6, 2))
    kernel = rng.normal(size=(2, 2, 2, 3))
    bias = np.zeros(3)

    out = conv2d(Tensor(x), Tensor(kernel), Tensor(bias))

    assert out.shape == (1, 4, 6, 3)
    assert_allclose(out.data, conv2d_oracle(x, kernel, bias, 0, 0, 4, 6), rtol=1e-12, atol=1e-12)


def test_conv2d_valid_padding(f64, rng):
    x = rng.normal(size=(1, 5, 5, 1))
    kernel = rng.normal(size=(3, 3, 1, 2))
    bias = rng.normal(size=2)

    out = conv2d(Tensor(x), Tensor(kernel), Tensor(bias), padding=PADDING_VALID)

    assert out.shape == (1, 3, 3, 2)
    assert_allclose(out.data, conv2d_oracle(x, kernel, bias, 0, 0, 3, 3), rtol=1e-12, atol=1e-12)


def test_conv2d_channel_mismatch_names_axis():
    with pytest.raises(ShapeError, match="axis 3"):
        conv2d(Tensor(np.zeros((1, 4, 4, 3))), Tensor(np.zeros((3, 3, 2, 1))), Tensor(np.zeros(1)))


def test_depthwise_axis_conv_matches_loop_oracle(f64, rng):
    x = rng.normal(size=(2, 5, 6, 3))
    filt_h = rng.normal(size=(5, 3))
    filt_w = rng.normal(size=(6, 3))
    bias = rng.normal(size=3)

    out_h = depthwise_axis_conv(Tensor(x), AXIS_H, Tensor(filt_h), Tensor(bias))
    out_w = depthwise_axis_conv(Tensor(x), AXIS_W, Tensor(filt_w), Tensor(bias))

    expected_h = np.zeros((2, 1, 6, 3))
    expected_w = np.zeros((2, 5, 1, 3))
    for b in range(2):
        for c in range(3):
            for j in range(6):
                expected_h[b, 0, j, c] = bias[c] + sum_loop(x[b, i, j, c] * filt_h[i, c] for i in range(5))
            for i in range(5):
                expected_w[b, i, 0, c] = bias[c] + sum_loop(x[b, i, j, c] * filt_w[j, c] for j in range(6))

    assert_allclose(out_h.data, expected_h, rtol=1e-12, atol=1e-12)
    assert_allclose(out_w.data, expected_w, rtol=1e-12, atol=1e-12)


def sum_loop(values) -> float:
    total = 0.0
    for value in values:
        total += value
    return total


def test_depthwise_axis_conv_rejects_unbound_filter():
    with pytest.raises(ShapeError):
        depthwise_axis_conv(Tensor(np.zeros((1, 4, 4, 2))), AXIS_H, Tensor(np.zeros((5, 2))), Tensor(np.zeros(2)))


def test_softmax_sums_to_one_and_is_shift_invariant(f64, rng):
    for _ in range(1000):
        x = rng.normal(scale=5.0, size=(2, 3, 4, 5))
        channels = softmax(Tensor(x), axes=3).data
        spatial = softmax(Tensor(x), axes=(1, 2)).data

        assert_allclose(channels.sum(axis=3), 1.0, atol=1e-6)
        assert_allclose(spatial.sum(axis=(1, 2)), 1.0, atol=1e-6)

    x = rng.normal(size=(1, 2, 2, 4))
    assert_allclose(softmax(Tensor(x + 100.0), axes=3).data, softmax(Tensor(x), axes=3).data, atol=1e-12)


def test_softmax_large_inputs_stay_finite():
    out = softmax(Tensor(np.array([[[[1000.0, 0.0, -1000.0]]]])), axes=3)

    assert np.all(np.isfinite(out.data))
    assert_allclose(out.data.reshape(-1), [1.0, 0.0, 0.0], atol=1e-6)


def test_maxpool_routes_gradient_to_first_maximum(f64):
    x = Tensor(np.array([[1.0, 3.0], [3.0, 2.0]]).reshape(1, 2, 2, 1), requires_grad=True)

    out = maxpool2(x)
    sum(out).backward()

    assert out.data.reshape(-1)[0] == 3.0
    assert_array_equal(x.grad.reshape(2, 2), [[0.0, 1.0], [0.0, 0.0]])


def test_maxpool_rejects_odd_extent():
    with pytest.raises(ShapeError, match="axis 2"):
        maxpool2(Tensor(np.zeros((1, 4, 5, 1))))


def test_upsample_repeats_pixels():
    x = np.arange(4.0).reshape(1, 2, 2, 1)
    out = upsample2(Tensor(x)).data[0, :, :, 0]

    assert_array_equal(out, [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]])


def test_dropout_is_identity_in_eval_mode(rng):
    x = Tensor(rng.normal(size=(2, 4, 4, 3)))

    assert dropout(x, 0.5, False, 7) is x
    assert dropout(x, 0.0, True, 7) is x


def test_dropout_masks_are_seeded(rng):
    x = Tensor(np.ones((4, 8, 8, 4)))

    first = dropout(x, 0.3, True, 11).data
    second = dropout(x, 0.3, True, 11).data
    other = dropout(x, 0.3, True, 12).data

    assert_array_equal(first, second)
    assert not np.array_equal(first, other)
    assert_allclose(first[first != 0.0], 1.0 / 0.7, rtol=1e-6)


def test_dropout_keeps_rate_and_mean(rng):
    x = rng.uniform(0.0, 2.0, size=(1, 100, 100, 10))

    out = dropout(Tensor(x), 0.3, True, 21).data

    assert abs(float(np.mean(out != 0.0)) - 0.7) <= 0.01
    assert abs(float(out.mean()) - float(x.mean())) <= 0.015


def test_dropout_rejects_rate_one():
    with pytest.raises(ValueError):
        dropout(Tensor(np.ones(3)), 1.0, True, 0)


def test_binary_ops_require_equal_shapes():
    with pytest.raises(ShapeError):
        add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))


def test_rescale_rejects_unknown_pattern():
    with pytest.raises(ShapeError):
        rescale(Tensor(np.zeros((1, 2, 2, 3))), Tensor(np.zeros((1, 2, 1, 3))))


def test_bias_add_checks_channel_extent():
    with pytest.raises(ShapeError):
        bias_add(Tensor(np.zeros((1, 2, 2, 3))), Tensor(np.zeros(2)))


def test_shared_tensor_gradients_accumulate(f64):
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)

    sum(add(mul(x, x), x)).backward()

    assert_allclose(x.grad, 2.0 * x.data + 1.0)


def test_graph_is_topologically_ordered():
    x = Tensor(np.ones((1, 2, 2, 1)), requires_grad=True)
    y = relu(x)
    z = sum(concat([y, x], axis=3))

    nodes = AutodiffGraph.from_output(z).nodes

    assert nodes[-1] is z
    assert nodes.index(x) < nodes.index(y)


def test_backward_requires_scalar():
    with pytest.raises(ShapeError):
        Tensor(np.ones(3), requires_grad=True).backward()


def test_constants_receive_no_gradient(f64):
    x = Tensor(np.ones(3), requires_grad=True)
    constant = Tensor(np.full(3, 2.0))

    sum(mul(x, constant)).backward()

    assert constant.grad is None
    assert_allclose(x.grad, 2.0)


def test_anomaly_detection_names_operation():
    settings.set_anomaly_detection(True)

    with pytest.raises(NumericalError, match="AddConst"):
        add(Tensor(np.array([np.inf])), 1.0)


def test_precision_switch():
    assert Tensor(np.ones(2)).data.dtype == np.float32

    with settings.precision("f64"):
        assert Tensor(np.ones(2)).data.dtype == np.float64

    assert settings.get_precision() == "f32"

    with pytest.raises(ValueError):
        settings.set_precision("f16")


@pytest.mark.parametrize("seed", range(20))
def test_operation_gradients(seed):
    reports = run_gradchecks("ops", seed, progress=False)

    assert set(reports) == set(op_checks(seed))
    for name, report in reports.items():
        assert report.passed, "{}: {:.3e}".format(name, report.max_rel_error)


def test_grad_check_detects_wrong_gradient(f64):
    def doubled(t):
        return add(mul(t, 2.0).detach(), mul(t, 0.0))

    report = grad_check(doubled, Tensor(np.array([1.0, 2.0])))

    assert not report.passed


def test_grad_check_samples_entries(f64, rng):
    report = grad_check(lambda t: mean(mul(t, t)), Tensor(rng.normal(size=(10, 10))), max_entries=7)

    assert report.entries == 7
    assert report.passed


def test_gradcheck_all_scope_prefixes_names(monkeypatch):
    square = (lambda t: sum(mul(t, t)), Tensor(np.array([1.0, -2.0])))
    cube = (lambda t: sum(mul(mul(t, t), t)), Tensor(np.array([0.5, 3.0])))
    monkeypatch.setattr("cli.verification.SCOPES", {'ops': lambda seed: {'square': square},
        'block': lambda seed: {'cube': cube}})

    reports = run_gradchecks("all", progress=False)

    assert sorted(reports) == ["block/cube", "ops/square"]
    assert all(report.passed for report in reports.values())
    assert list(run_gradchecks("ops", progress=False)) == ["square"]

    with pytest.raises(ValueError):
        run_gradchecks("everything", progress=False)
