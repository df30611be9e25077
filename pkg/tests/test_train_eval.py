"""
Tests of the Dice metric and loss, Adam, the training loop, evaluation and the
metrics table.

Date: 2024-03-28
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import numpy as np
import pytest

from numpy.testing import assert_allclose, assert_array_equal

from common import defines
from common.exceptions import DataError, NumericalError, ShapeError
from segnet import ModelConfig, SegNet, read_manifest
from slice_compression import CompressionConfig
from tensor_engine import Tensor, grad_check
from tensor_engine.kernels import softmax
from train_eval import (CLASS_ALL, AdamState, MetricsWriter, TrainConfig, adam_step, class_name, cross_validate,
    dice_loss, dice_score, evaluate, evaluation_rows, fit, fit_input_shape, metrics_row, one_hot, predict_volume,
    read_metrics, run_fold, score_predictions, summarize)
from volume_data import Volume, kfold_split, make_samples
from volume_data.samples import Sample, SubjectView

FAST_TRAINING = TrainConfig(lr=1e-3, l2_lambda=1e-5, max_epochs=2, batch_size=8, seed=5, progress=False)


def small_network_config(volumes: dict, variant: str, view: str = defines.VIEW_SAGITTAL) -> ModelConfig:
    config = ModelConfig(variant=variant, depth=2, base_channels=2, num_classes=4, dropout_rate=0.1,
        compression=CompressionConfig(radius=2))
    return fit_input_shape(config, volumes, view)


def test_dice_score_examples():
    pred = np.array([0, 1, 1, 0, 2])
    true = np.array([0, 1, 0, 0, 2])

    assert dice_score(pred, true, 1) == pytest.approx(2.0 / 3.0)
    assert dice_score(pred, true, 0) == pytest.approx(2.0 * 2 / 5)
    assert dice_score(pred, true, 2) == 1.0
    assert dice_score(pred, true, 3) == 1.0
    assert dice_score(pred, np.full(5, 3), 3) == 0.0


def test_dice_score_is_symmetric_and_ignores_voxel_order(rng):
    pred = rng.integers(0, 4, size=(6, 7, 5))
    true = rng.integers(0, 4, size=(6, 7, 5))
    perm = rng.permutation(pred.size)

    for cls in range(4):
        score = dice_score(pred, true, cls)
        assert dice_score(true, pred, cls) == score
        assert dice_score(pred.reshape(-1)[perm], true.reshape(-1)[perm], cls) == pytest.approx(score, abs=1e-15)


def test_dice_score_shape_mismatch():
    with pytest.raises(ShapeError):
        dice_score(np.zeros((2, 2)), np.zeros(4), 0)


def test_one_hot():
    encoded = one_hot(np.array([[0, 2], [1, 0]]), 3)

    assert encoded.shape == (2, 2, 3)
    assert_array_equal(encoded[0, 1], [0.0, 0.0, 1.0])

    with pytest.raises(ShapeError):
        one_hot(np.array([3]), 3)


def test_dice_loss_matches_formula(f64, rng):
    probabilities = softmax(Tensor(rng.normal(size=(2, 4, 5, 3))), axes=3)
    targets = one_hot(rng.integers(0, 3, size=(2, 4, 5)), 3)

    intersection = (probabilities.data * targets).sum(axis=(0, 1, 2))
    denominator = probabilities.data.sum(axis=(0, 1, 2)) + targets.sum(axis=(0, 1, 2))
    dice = (2.0 * intersection + 1e-6) / (denominator + 1e-6)

    assert_allclose(dice_loss(probabilities, targets).item(), 1.0 - dice[1:].mean(), rtol=1e-12)


def test_dice_loss_of_perfect_prediction(f64, rng):
    targets = one_hot(rng.integers(0, 4, size=(1, 6, 6)), 4)

    assert dice_loss(Tensor(targets), targets).item() == pytest.approx(0.0, abs=1e-9)
    assert dice_loss(Tensor(targets[..., ::-1].copy()), targets).item() > 0.5


def test_dice_loss_gradient(f64, rng):
    targets = one_hot(rng.integers(0, 3, size=(2, 3, 3)), 3)

    report = grad_check(lambda logits: dice_loss(softmax(logits, axes=3), targets),
        Tensor(rng.normal(size=(2, 3, 3, 3))))

    assert report.passed, report.max_rel_error


def test_dice_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        dice_loss(Tensor(np.ones((1, 2, 2, 3))), np.ones((1, 2, 2, 4)))


def test_adam_first_step_moves_by_learning_rate(f64):
    params = {'w': Tensor(np.array([1.0, -2.0, 3.0]))}
    grads = {'w': np.array([0.5, -4.0, 1e-3])}

    updated = adam_step(params, grads, AdamState(), 1, lr=0.01)

    assert_allclose(updated['w'].data, [0.99, -1.99, 2.99], atol=1e-6)
    assert updated['w'].requires_grad


def test_adam_l2_term_and_missing_gradients(f64):
    params = {'w': Tensor(np.array([2.0])), 'b': Tensor(np.array([0.5]))}

    updated = adam_step(params, {}, AdamState(), 1, lr=0.1, l2_lambda=0.1)

    assert_allclose(updated['w'].data, [1.9], atol=1e-6)
    assert_allclose(updated['b'].data, [0.4], atol=1e-6)

    unchanged = adam_step(params, {}, AdamState(), 1, lr=0.1)
    assert_allclose(unchanged['w'].data, [2.0])


def test_adam_converges_on_quadratic(f64):
    target = np.array([0.5, -1.5])
    params = {'w': Tensor(np.zeros(2))}
    state = AdamState()
    converged_at = None

    for t in range(1, 5001):
        error = params['w'].data - target
        if float(np.sum(error ** 2)) <= 1e-6:
            converged_at = t
            break
        params = adam_step(params, {'w': 2.0 * error}, state, t, lr=0.01)

    assert converged_at is not None
    assert float(np.sum((params['w'].data - target) ** 2)) <= 1e-6


def test_adam_ignores_uniform_gradient_scale(f64, rng):
    params = {'w': Tensor(rng.normal(size=6))}
    unit, scaled = AdamState(), AdamState()
    unit_params, scaled_params = params, params

    for t in range(1, 6):
        grad = rng.uniform(0.5, 2.0, size=6) * rng.choice([-1.0, 1.0], size=6)
        unit_next = adam_step(unit_params, {'w': grad}, unit, t, lr=0.01)
        scaled_next = adam_step(scaled_params, {'w': 10.0 * grad}, scaled, t, lr=0.01)

        unit_update = unit_next['w'].data - unit_params['w'].data
        scaled_update = scaled_next['w'].data - scaled_params['w'].data
        unit_params, scaled_params = unit_next, scaled_next
        assert_allclose(scaled_update, unit_update, rtol=1e-6, atol=1e-12)


def test_adam_step_numbers_start_at_one():
    with pytest.raises(ValueError):
        adam_step({}, {}, AdamState(), 0, lr=0.1)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0).validate()
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0).validate()
    with pytest.raises(ValueError):
        TrainConfig(early_stop_patience=-1).validate()


def test_fit_input_shape_pads_view(small_phantoms):
    config = ModelConfig(variant=defines.VARIANT_PLAIN, depth=3, base_channels=2)

    assert fit_input_shape(config, small_phantoms, defines.VIEW_SAGITTAL).input_shape == (16, 16)
    assert fit_input_shape(config, small_phantoms, defines.VIEW_AXIAL).input_shape == (12, 16)

    volumes = dict(small_phantoms, odd=Volume(np.zeros((12, 16, 10), dtype=np.float32)))
    with pytest.raises(DataError):
        fit_input_shape(config, volumes, defines.VIEW_SAGITTAL)


def test_fit_input_shape_checks_compression_radius(small_phantoms):
    config = ModelConfig(variant=defines.VARIANT_MDA, depth=2, base_channels=2, compression=CompressionConfig(radius=6))

    # 12 sagittal slices: 2r = 12 does not fit, the 14 coronal slices do
    with pytest.raises(ShapeError, match="radius 6"):
        fit_input_shape(config, small_phantoms, defines.VIEW_SAGITTAL)
    assert fit_input_shape(config, small_phantoms, defines.VIEW_CORONAL).compression.radius == 6


@pytest.mark.parametrize("variant", [defines.VARIANT_PLAIN, defines.VARIANT_MDA])
def test_fit_records_every_epoch(small_phantoms, variant):
    train = {subject_id: small_phantoms[subject_id] for subject_id in ("phantom000", "phantom001")}
    config = small_network_config(small_phantoms, variant)
    net = SegNet.build(config, 0)

    result = fit(net, make_samples(train, defines.VIEW_SAGITTAL, 2), FAST_TRAINING)

    assert len(result.rows) == 2
    assert [row['epoch'] for row in result.rows] == [1, 2]
    assert all(row['class'] == CLASS_ALL and row['variant'] == variant for row in result.rows)
    assert all(0.0 <= loss <= 1.0 for loss in result.losses)
    assert result.best_epoch in (1, 2)
    assert result.best_score == min(result.losses)


def test_fit_is_deterministic(small_phantoms):
    train = {subject_id: small_phantoms[subject_id] for subject_id in ("phantom000", "phantom001")}
    config = small_network_config(small_phantoms, defines.VARIANT_MSE)
    results = []

    for _ in range(2):
        net = SegNet.build(config, 1)
        results.append((fit(net, make_samples(train, defines.VIEW_SAGITTAL, 2), FAST_TRAINING), net))

    (first, first_net), (second, second_net) = results
    assert first.losses == second.losses
    for name in first_net.params.names():
        assert_array_equal(first_net.params[name].data, second_net.params[name].data)


def test_fit_selects_on_validation_and_saves_checkpoint(tmp_path, small_phantoms):
    train = {subject_id: small_phantoms[subject_id] for subject_id in ("phantom000", "phantom001")}
    validation = {"phantom002": small_phantoms["phantom002"]}
    net = SegNet.build(small_network_config(small_phantoms, defines.VARIANT_PLAIN), 0)
    path = str(tmp_path / "model.ckpt")

    result = fit(net, make_samples(train, defines.VIEW_SAGITTAL, 2), FAST_TRAINING, validation, fold=3,
        checkpoint_path=path)
    manifest, _ = read_manifest(path)

    assert all(0.0 <= row['dice_mean'] <= 1.0 for row in result.rows)
    assert result.best_score == max(row['dice_mean'] for row in result.rows)
    assert manifest['extra'] == {'epoch': result.best_epoch, 'fold': 3, 'view': defines.VIEW_SAGITTAL}


def test_fit_rejects_non_finite_loss(small_phantoms):
    volume = small_phantoms["phantom000"]
    image = np.full((16, 14, 12), np.nan, dtype=np.float32)
    source = SubjectView("broken", defines.VIEW_SAGITTAL, image, np.zeros(image.shape, dtype=np.uint8), (16, 14))
    net = SegNet.build(small_network_config({"phantom000": volume}, defines.VARIANT_PLAIN), 0)

    with pytest.raises(NumericalError):
        fit(net, [Sample(source, idx) for idx in range(12)], FAST_TRAINING)


def test_fit_needs_samples(small_phantoms):
    net = SegNet.build(small_network_config(small_phantoms, defines.VARIANT_PLAIN), 0)

    with pytest.raises(DataError):
        fit(net, [], FAST_TRAINING)


def test_predict_and_evaluate(small_phantoms):
    config = small_network_config(small_phantoms, defines.VARIANT_MDA, defines.VIEW_CORONAL)
    net = SegNet.build(config, 2)
    test = {subject_id: small_phantoms[subject_id] for subject_id in ("phantom002", "phantom003")}

    predicted = predict_volume(net, test["phantom002"], defines.VIEW_CORONAL)
    result = evaluate(net, test, defines.VIEW_CORONAL)

    assert predicted.shape == (12, 16, 14)
    assert predicted.dtype == np.uint8
    assert sorted(result.per_subject) == ["phantom002", "phantom003"]
    assert result.mean.shape == (4,)
    assert np.all((result.mean >= 0.0) & (result.mean <= 1.0))
    assert_array_equal(result.predictions["phantom002"], predicted)


def test_evaluate_needs_labels(small_phantoms):
    net = SegNet.build(small_network_config(small_phantoms, defines.VARIANT_PLAIN), 0)

    with pytest.raises(DataError):
        evaluate(net, {"x": Volume(small_phantoms["phantom000"].image)}, defines.VIEW_SAGITTAL)


def test_scores_of_perfect_predictions(small_phantoms):
    predictions = {subject_id: volume.labels.copy() for subject_id, volume in small_phantoms.items()}

    result = score_predictions(predictions, small_phantoms, 4)

    assert_array_equal(result.mean, np.ones(4))
    assert_array_equal(result.std, np.zeros(4))
    assert result.foreground_mean() == 1.0

    with pytest.raises(DataError):
        score_predictions({}, small_phantoms, 4)


def test_constant_background_network_scores_zero_foreground(small_phantoms):
    net = SegNet.build(small_network_config(small_phantoms, defines.VARIANT_PLAIN), 0)
    kernel = net.params["head.kernel"]
    net.params.update({"head.kernel": Tensor(np.zeros(kernel.shape)),
        "head.bias": Tensor(np.array([10.0, 0.0, 0.0, 0.0]))})

    result = evaluate(net, small_phantoms, defines.VIEW_SAGITTAL)

    assert all(np.all(predicted == 0) for predicted in result.predictions.values())
    assert_array_equal(result.mean[1:], np.zeros(3))
    assert 0.0 < result.mean[0] < 1.0


def test_evaluation_rows_cover_foreground_classes(small_phantoms):
    net = SegNet.build(small_network_config(small_phantoms, defines.VARIANT_PLAIN), 0)
    result = evaluate(net, {"phantom001": small_phantoms["phantom001"]}, defines.VIEW_SAGITTAL)

    rows = evaluation_rows(result, 1, defines.VIEW_SAGITTAL, defines.VARIANT_PLAIN, 7)

    assert [row['class'] for row in rows] == ["csf", "gm", "wm"]
    assert all(np.isnan(row['loss']) and row['epoch'] == 7 for row in rows)
    assert result.foreground_mean() == pytest.approx(np.mean([row['dice_mean'] for row in rows]))


def test_class_names():
    assert class_name(1, 4) == "csf"
    assert class_name(2, 3) == "class2"


def test_run_fold_and_cross_validate(small_phantoms):
    config = small_network_config(small_phantoms, defines.VARIANT_CSCSE)
    training = TrainConfig(lr=1e-3, max_epochs=1, batch_size=16, seed=0, progress=False)
    folds = kfold_split(small_phantoms, 2, seed=0)

    rows = run_fold(0, *folds[0], small_phantoms, config, training, defines.VIEW_SAGITTAL)
    all_rows = cross_validate(small_phantoms, config, training, defines.VIEW_SAGITTAL, folds)

    assert [row['class'] for row in rows] == [CLASS_ALL, "csf", "gm", "wm"]
    assert [row['fold'] for row in all_rows] == [0] * 4 + [1] * 4
    assert all_rows[0]['loss'] == rows[0]['loss']
    assert [row['dice_mean'] for row in all_rows[1:4]] == [row['dice_mean'] for row in rows[1:]]


def test_metrics_writer_and_summary(tmp_path):
    path = str(tmp_path / "metrics.csv")
    writer = MetricsWriter(path)

    writer.append([metrics_row(0, "axial", "mse", 1, CLASS_ALL, loss=0.5)])
    writer.append([metrics_row(fold, "axial", "mse", 3, "gm", 0.8 + 0.1 * fold, 0.01) for fold in range(2)])
    writer.append([])

    frame = read_metrics(path)
    summary = summarize(frame)

    assert list(frame.columns) == defines.METRICS_COLUMNS
    assert len(frame) == 3
    assert list(summary['class']) == ["gm"]
    assert summary['mean'].iloc[0] == pytest.approx(0.85)
    assert summary['std'].iloc[0] == pytest.approx(np.std([0.8, 0.9], ddof=1))

    with open(path) as stream:
        assert stream.read().count("fold,view,variant") == 1


@pytest.mark.slow
def test_loss_decreases_on_zero_noise_phantoms(small_phantoms):
    config = ModelConfig(variant=defines.VARIANT_MDA, depth=2, base_channels=4, num_classes=4, dropout_rate=0.0,
        compression=CompressionConfig(radius=2))
    config = fit_input_shape(config, small_phantoms, defines.VIEW_SAGITTAL)
    training = TrainConfig(lr=3e-3, l2_lambda=0.0, max_epochs=30, batch_size=8, seed=0, progress=False)

    result = fit(SegNet.build(config, 0), make_samples(small_phantoms, defines.VIEW_SAGITTAL, 2), training)
    block_means = np.asarray(result.losses).reshape(6, 5).mean(axis=1)

    assert len(result.losses) == 30
    assert block_means[-1] < block_means[0] - 0.05
    assert np.all(np.diff(block_means) <= 0.02), block_means
