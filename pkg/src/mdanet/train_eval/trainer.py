"""
Training loop, volume prediction, evaluation and subject-level cross-validation.

Date: 2024-03-19
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import logging
import numpy as np

from dataclasses import dataclass, field
from joblib import Parallel, delayed
from tqdm import tqdm

from common import defines
from common.exceptions import DataError, NumericalError
from common.seeding import derive_seed, make_rng
from segnet.checkpoint import save_checkpoint
from segnet.model_config import ModelConfig
from segnet.network import SegNet, argmax_labels
from slice_compression.compression import OrderedDiffCache
from tensor_engine import settings
from train_eval.dice import dice_loss, dice_score, one_hot
from train_eval.optim import AdamState, adam_step
from train_eval.report import CLASS_ALL, metrics_row
from volume_data.samples import Sample, make_samples, subject_view
from volume_data.views import padded_shape, restack_view, view_plan
from volume_data.volume import Volume

logger = logging.getLogger(__name__)

# Module configuration settings
MODULE_NAME = "train_eval"
MODULE_CONFIG = {
    defines.CONF_PARAMS_MANDATORY: [],
    defines.CONF_PARAMS_DEFAULTS: {'lr': 5e-5, 'l2_lambda': 1e-5, 'max_epochs': 300, 'batch_size': 8, 'seed': 0,
        'early_stop_patience': 0, 'jobs': 1, 'detect_anomaly': False, 'progress': True},
    defines.CONF_PARAMS_INTS: ['max_epochs', 'batch_size', 'seed', 'early_stop_patience', 'jobs'],
    defines.CONF_PARAMS_FLOATS: ['lr', 'l2_lambda'],
    defines.CONF_PARAMS_STRINGS: None,
    defines.CONF_PARAMS_BOOLS: ['detect_anomaly', 'progress'],
    defines.CONF_PARAMS_LISTS: None
}


@dataclass(frozen=True)
class TrainConfig:
    lr:                  float = 5e-5
    l2_lambda:           float = 1e-5
    max_epochs:          int = 300
    batch_size:          int = 8
    seed:                int = 0
    early_stop_patience: int = 0        # Epochs without improvement before stopping, 0 disables
    jobs:                int = 1        # Parallel cross-validation folds
    detect_anomaly:      bool = False
    progress:            bool = True


    def validate(self) -> None:
        if self.lr <= 0.0:
            raise ValueError("Learning rate must be > 0, got {}".format(self.lr))
        if self.batch_size < 1:
            raise ValueError("Batch size must be >= 1, got {}".format(self.batch_size))
        if self.max_epochs < 1:
            raise ValueError("At least one epoch is required, got {}".format(self.max_epochs))
        if self.l2_lambda < 0.0 or self.early_stop_patience < 0 or self.seed < 0:
            raise ValueError("L2 strength, patience and seed must be non-negative")


    @classmethod
    def from_config(cls, config: dict) -> "TrainConfig":
        section = config[MODULE_NAME]
        train_config = cls(**{name: section[name] for name in MODULE_CONFIG[defines.CONF_PARAMS_DEFAULTS]})
        train_config.validate()

        return train_config


@dataclass
class FitResult:
    """Outcome of fit(): per-epoch rows and the selected epoch."""
    rows:       list = field(default_factory=list)     # Metrics rows, one per epoch
    losses:     list = field(default_factory=list)     # Mean training loss per epoch
    best_epoch: int = 0
    best_score: float = np.nan


@dataclass
class EvalResult:
    """Per-class 3D Dice of every test subject and its mean and deviation across subjects."""
    per_subject: dict = field(default_factory=dict)    # subject id -> [K] Dice
    mean:        np.ndarray | None = None
    std:         np.ndarray | None = None
    predictions: dict = field(default_factory=dict)    # subject id -> predicted label volume


    def foreground_mean(self) -> float:
        return float(np.mean(self.mean[1:]))


def class_name(cls: int, num_classes: int) -> str:
    return defines.CLASS_NAMES[cls] if num_classes == len(defines.CLASS_NAMES) else "class{}".format(cls)


def fit_input_shape(config: ModelConfig, volumes: dict, view: str) -> ModelConfig:
    """Binds the network to the padded in-plane shape of the view. All subjects must share their dims, and the
    compression radius must fit the slice count of the view.

    Raises:
        DataError if the subjects have different dims
        ShapeError if 2r is not below the number of slices of the view"""

    dims = {volume.dims for volume in volumes.values()}

    if len(dims) != 1:
        raise DataError("Subjects have different dims {}, the network input shape must be fixed".format(
            sorted(dims)))

    plan = view_plan(view, dims.pop())

    if config.compression is not None:
        config.compression.validate(plan.num_slices)

    return config.with_input_shape(padded_shape(plan.slice_shape, 2 ** (config.depth - 1)))


def _pad_multiple(net: SegNet) -> int:
    return 2 ** (net.config.depth - 1)


def _ordered_diffs(net: SegNet, samples: list, cache: OrderedDiffCache | None) -> np.ndarray | None:
    """Ordered difference stacks [N, m, n, 2r] of a batch, None without compression."""

    cfg = net.config.compression
    if cfg is None:
        return None

    cache = cache if cache is not None else OrderedDiffCache(len(samples))

    return np.stack([cache.get(sample.subject_id, sample.view, sample.source.image, sample.index, cfg).diffs
        for sample in samples])


def fit(net: SegNet, samples: list, cfg: TrainConfig, validation: dict | None = None, fold: int = 0,
    cache: OrderedDiffCache | None = None, checkpoint_path: str | None = None) -> FitResult:
    """Trains a network with Adam on the soft Dice loss.

    The samples are shuffled per epoch by a stream derived from the seed. The parameters of the best epoch are
    kept: the highest mean foreground Dice on the validation subjects when given, the lowest epoch loss otherwise.

    Parameters:
        net             Network, updated in place
        samples         Labeled training samples of one view
        cfg             Training configuration
        validation      Optional subject id -> Volume used for model selection
        fold            Fold number recorded in the metrics rows
        cache           Ordered difference stack cache (mda)
        checkpoint_path Where the best network is saved, None to skip

    Raises:
        NumericalError on a non-finite loss

    Returns:
        FitResult Metrics rows and the selected epoch"""

    if not samples:
        raise DataError("No training samples")

    cfg.validate()
    settings.set_anomaly_detection(cfg.detect_anomaly)

    config = net.config
    view = samples[0].view
    cache = cache if cache is not None else OrderedDiffCache()
    state = AdamState()
    result = FitResult()
    best_params = None
    stale_epochs = 0
    step = 0

    epochs = tqdm(range(1, cfg.max_epochs + 1), desc="fold {} {}".format(fold, config.variant),
        disable=not cfg.progress, leave=False)

    for epoch in epochs:
        order = make_rng(cfg.seed, "shuffle", epoch).permutation(len(samples))
        batch_losses = []

        for batch_idx, start in enumerate(range(0, len(samples), cfg.batch_size)):
            batch = [samples[idx] for idx in order[start:start + cfg.batch_size]]
            slices = np.stack([sample.image for sample in batch])
            targets = one_hot(np.stack([sample.label for sample in batch]), config.num_classes)

            probabilities = net.predict_proba(slices, _ordered_diffs(net, batch, cache), train_mode=True,
                seed=derive_seed(cfg.seed, "dropout", epoch, batch_idx))
            loss = dice_loss(probabilities, targets)

            if not np.isfinite(loss.item()):
                raise NumericalError("Non-finite loss at epoch {} batch {}".format(epoch, batch_idx))

            loss.backward()
            step += 1

            params = net.params.lookup()
            grads = {name: tensor.grad for name, tensor in params.items() if tensor.grad is not None}
            net.params.update(adam_step(params, grads, state, step, cfg.lr, cfg.l2_lambda))
            batch_losses.append(loss.item())

        epoch_loss = float(np.mean(batch_losses))
        result.losses.append(epoch_loss)

        if validation:
            score = evaluate(net, validation, view, cfg.batch_size, cache).foreground_mean()
            improved = np.isnan(result.best_score) or score > result.best_score
        else:
            score = np.nan
            improved = np.isnan(result.best_score) or epoch_loss < result.best_score

        result.rows.append(metrics_row(fold, view, config.variant, epoch, CLASS_ALL, score, np.nan, epoch_loss))
        epochs.set_postfix(loss="{:.4f}".format(epoch_loss))
        logger.debug("Fold %d epoch %d: loss %.6f, validation Dice %.4f", fold, epoch, epoch_loss, score)

        if improved:
            result.best_epoch = epoch
            result.best_score = score if validation else epoch_loss
            best_params = net.params.lookup()
            stale_epochs = 0
        else:
            stale_epochs += 1
            if cfg.early_stop_patience and stale_epochs >= cfg.early_stop_patience:
                logger.info("Early stop at epoch %d, best epoch %d", epoch, result.best_epoch)
                break

    net.params.update(best_params)

    if checkpoint_path is not None:
        save_checkpoint(net, checkpoint_path, {'epoch': result.best_epoch, 'fold': fold, 'view': view})

    return result


def predict_volume(net: SegNet, volume: Volume, view: str, batch_size: int = 8,
    cache: OrderedDiffCache | None = None, subject_id: str = "subject") -> np.ndarray:
    """Segments a volume slice by slice and restacks the argmax labels.

    Returns:
        np.ndarray uint8 labels with the dims of the volume"""

    source = subject_view(subject_id, volume, view, _pad_multiple(net))
    frozen = net.params.detached()
    cache = cache if cache is not None else OrderedDiffCache(source.num_slices)
    predicted = np.zeros(source.image.shape, dtype=np.uint8)

    samples = [Sample(source, idx) for idx in range(source.num_slices)]

    for start in range(0, len(samples), batch_size):
        batch = samples[start:start + batch_size]
        slices = np.stack([sample.image for sample in batch])
        probabilities = net.predict_proba(slices, _ordered_diffs(net, batch, cache), params=frozen)
        predicted[:, :, start:start + len(batch)] = np.moveaxis(argmax_labels(probabilities), 0, -1)

    return restack_view(source.crop(predicted), view)


def score_predictions(predictions: dict, volumes: dict, num_classes: int) -> EvalResult:
    """Per-class 3D Dice of predicted label volumes against the labels of their subjects.

    Parameters:
        predictions subject id -> predicted label volume
        volumes     subject id -> labeled Volume
        num_classes Number of classes, background included

    Raises:
        DataError if a subject has no labels or no prediction

    Returns:
        EvalResult Dice per subject and class"""

    result = EvalResult()

    for subject_id in sorted(volumes):
        volume = volumes[subject_id]
        if volume.labels is None:
            raise DataError("Subject {} has no labels to evaluate against".format(subject_id))
        if subject_id not in predictions:
            raise DataError("Subject {} has no prediction".format(subject_id))

        predicted = predictions[subject_id]
        result.predictions[subject_id] = predicted
        result.per_subject[subject_id] = np.array([dice_score(predicted, volume.labels, cls)
            for cls in range(num_classes)])

    scores = np.stack(list(result.per_subject.values()))
    result.mean = scores.mean(axis=0)
    result.std = scores.std(axis=0)

    return result


def evaluate(net: SegNet, volumes: dict, view: str, batch_size: int = 8,
    cache: OrderedDiffCache | None = None) -> EvalResult:
    """Per-class 3D Dice of restacked predictions, mean and standard deviation across subjects.

    Parameters:
        net        Trained network
        volumes    subject id -> labeled Volume
        view       View the network was trained on
        batch_size Slices per forward pass
        cache      Ordered difference stack cache (mda)

    Returns:
        EvalResult Dice per subject and class"""

    for subject_id, volume in volumes.items():
        if volume.labels is None:
            raise DataError("Subject {} has no labels to evaluate against".format(subject_id))

    predictions = {subject_id: predict_volume(net, volumes[subject_id], view, batch_size, cache, subject_id)
        for subject_id in sorted(volumes)}

    return score_predictions(predictions, volumes, net.config.num_classes)


def evaluation_rows(result: EvalResult, fold: int, view: str, variant: str, epoch: int) -> list:
    """Metrics rows of the foreground classes of an evaluation."""

    num_classes = len(result.mean)

    return [metrics_row(fold, view, variant, epoch, class_name(cls, num_classes), float(result.mean[cls]),
        float(result.std[cls])) for cls in range(1, num_classes)]


def run_fold(fold: int, train_ids: list, test_ids: list, volumes: dict, model_config: ModelConfig,
    train_cfg: TrainConfig, view: str, cache_size: int = 4096, checkpoint_path: str | None = None) -> list:
    """Trains and evaluates one cross-validation fold, returning its metrics rows."""

    train_volumes = {subject_id: volumes[subject_id] for subject_id in train_ids}
    test_volumes = {subject_id: volumes[subject_id] for subject_id in test_ids}

    net = SegNet.build(model_config, derive_seed(train_cfg.seed, "init", fold))
    cache = OrderedDiffCache(cache_size)
    samples = make_samples(train_volumes, view, 2 ** (model_config.depth - 1))

    logger.info("Fold %d: %d training samples from %d subjects, %d test subjects", fold, len(samples),
        len(train_ids), len(test_ids))

    fit_result = fit(net, samples, train_cfg, fold=fold, cache=cache, checkpoint_path=checkpoint_path)
    evaluation = evaluate(net, test_volumes, view, train_cfg.batch_size, cache)

    logger.info("Fold %d: mean foreground Dice %.4f", fold, evaluation.foreground_mean())

    return fit_result.rows + evaluation_rows(evaluation, fold, view, model_config.variant, fit_result.best_epoch)


def cross_validate(volumes: dict, model_config: ModelConfig, train_cfg: TrainConfig, view: str, folds: list,
    cache_size: int = 4096, checkpoint_paths: list | None = None) -> list:
    """Runs every fold, in parallel processes when train_cfg.jobs > 1.

    Parameters:
        volumes          subject id -> labeled Volume
        model_config     Network configuration bound to the view
        train_cfg        Training configuration
        view             View to train on
        folds            (train ids, test ids) pairs from kfold_split()
        cache_size       Entries of the ordered difference stack cache per fold
        checkpoint_paths Optional checkpoint path per fold

    Returns:
        list Metrics rows of all folds in fold order"""

    checkpoint_paths = checkpoint_paths or [None] * len(folds)

    fold_rows = Parallel(n_jobs=train_cfg.jobs)(
        delayed(run_fold)(fold, train_ids, test_ids, volumes, model_config, train_cfg, view, cache_size,
            checkpoint_paths[fold]) for fold, (train_ids, test_ids) in enumerate(folds))

    return [row for rows in fold_rows for row in rows]
