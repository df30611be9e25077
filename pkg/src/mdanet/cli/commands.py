"""
Implementation of the mdanet subcommands. Commands validate all inputs before
writing anything; errors propagate as package exceptions and are mapped to exit
codes by the script.

Date: 2024-03-20
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import json
import logging
import os
import numpy as np

from tqdm import tqdm

from cli import verification
from common import defines
from common.config_loader import write_config
from common.exceptions import DataError, ModelConfigError, NumericalError
from segnet.checkpoint import load_checkpoint, read_manifest
from segnet.model_config import ModelConfig
from segnet.paramcount import count_variant, expected_compression_count, param_count
from segnet.network import SegNet
from train_eval.report import MetricsWriter, metrics_frame, summarize
from train_eval.trainer import (TrainConfig, class_name, cross_validate, evaluate, fit_input_shape, predict_volume,
    run_fold, score_predictions)
from volume_data.phantom import PhantomConfig, synth_phantom
from volume_data.samples import kfold_split, load_subjects, write_subjects_manifest
from volume_data.volume import Volume, header_path, import_raw, load_volume, save_volume

logger = logging.getLogger(__name__)


def config_overrides(args) -> dict:
    """Configuration values given on the command line, None where a flag is absent."""

    return {
        'segnet': {'variant': getattr(args, 'variant', None)},
        'volume_data': {'view': getattr(args, 'view', None), 'data': getattr(args, 'data', None),
            'folds': getattr(args, 'folds', None)},
        'train_eval': {'seed': getattr(args, 'seed', None), 'max_epochs': getattr(args, 'epochs', None),
            'jobs': getattr(args, 'jobs', None)}
    }


def cmd_make_phantoms(args) -> None:
    """Writes N labeled phantoms and the subject manifest into the output directory."""

    if args.subjects < 1:
        raise DataError("At least one phantom subject is required")

    cfg = PhantomConfig.zero_noise() if args.zero_noise else PhantomConfig()
    os.makedirs(args.out, exist_ok=True)
    entries = []

    for subject in tqdm(range(args.subjects), desc="phantoms", leave=False):
        subject_id = "phantom{:03d}".format(subject)
        volume = synth_phantom(args.seed * 1000003 + subject, args.dims, args.num_classes, cfg)
        save_volume(volume, os.path.join(args.out, subject_id))
        entries.append({'id': subject_id, 'volume': subject_id + ".json"})

    write_subjects_manifest(args.out, entries)
    logger.info("%d phantoms with dims %s written to %s", args.subjects, args.dims, args.out)


def cmd_import(args) -> None:
    """Converts a raw dump and registers it in the manifest of the output directory."""

    directory = os.path.dirname(os.path.abspath(header_path(args.out)))
    manifest_path = os.path.join(directory, defines.SUBJECTS_MANIFEST)
    entries = []

    if os.path.exists(manifest_path):
        with open(manifest_path, 'r') as stream:
            entries = json.load(stream).get('subjects', [])

    import_raw(args.raw, args.dims, args.dtype, args.out, args.labels_raw, args.spacing)

    volume_name = os.path.basename(header_path(args.out))
    subject_id = args.id or volume_name[:-len(".json")]
    entries = [entry for entry in entries if entry['id'] != subject_id]
    entries.append({'id': subject_id, 'volume': volume_name})
    write_subjects_manifest(directory, entries)


def _prepare_run(config: dict, require_labels: bool = True) -> tuple:
    """Loads the subjects and the typed configurations of a training command."""

    data = config['volume_data']['data']
    if data is None:
        raise DataError("No data given, set volume_data.data or pass --data")

    view = config['volume_data']['view']
    volumes = load_subjects(data, require_labels)
    model_config = fit_input_shape(ModelConfig.from_config(config), volumes, view)

    try:
        train_cfg = TrainConfig.from_config(config)
    except ValueError as exc:
        raise ModelConfigError(str(exc)) from exc

    folds = kfold_split(list(volumes), config['volume_data']['folds'], train_cfg.seed)

    return volumes, view, model_config, train_cfg, folds


def _start_run(run_dir: str, config: dict, model_config: ModelConfig) -> None:
    """Creates the run directory with the resolved configuration that produced it."""

    os.makedirs(run_dir, exist_ok=True)
    resolved = dict(config)
    resolved['segnet'] = dict(config['segnet'], input_shape=list(model_config.input_shape))
    write_config(resolved, os.path.join(run_dir, defines.RUN_RESOLVED_CONFIG))


def cmd_train(args, config: dict) -> None:
    """Trains and evaluates one fold, writing checkpoint, metrics and resolved configuration."""

    volumes, view, model_config, train_cfg, folds = _prepare_run(config)

    if not 0 <= args.fold < len(folds):
        raise ModelConfigError("Fold {} out of range for {} folds".format(args.fold, len(folds)))

    train_ids, test_ids = folds[args.fold]
    _start_run(args.run_dir, config, model_config)

    rows = run_fold(args.fold, train_ids, test_ids, volumes, model_config, train_cfg, view,
        config['slice_compression']['cache_size'], os.path.join(args.run_dir, defines.RUN_CHECKPOINT))
    MetricsWriter(os.path.join(args.run_dir, defines.RUN_METRICS)).append(rows)


def cmd_crossval(args, config: dict) -> None:
    """Runs all folds, one checkpoint per fold, and logs the per-class summary."""

    volumes, view, model_config, train_cfg, folds = _prepare_run(config)
    _start_run(args.run_dir, config, model_config)

    checkpoints = [os.path.join(args.run_dir, "fold{}_{}".format(fold, defines.RUN_CHECKPOINT))
        for fold in range(len(folds))]
    rows = cross_validate(volumes, model_config, train_cfg, view, folds, config['slice_compression']['cache_size'],
        checkpoints)
    MetricsWriter(os.path.join(args.run_dir, defines.RUN_METRICS)).append(rows)

    for _, row in summarize(metrics_frame(rows)).iterrows():
        logger.info("%s %s %s: Dice %.4f +- %.4f over folds", row['view'], row['variant'], row['class'],
            row['mean'], 0.0 if np.isnan(row['std']) else row['std'])


def _checkpoint_view(path: str, requested: str | None) -> str:
    """View of a scoring command: the flag, else the view the checkpoint was trained on."""

    if requested is not None:
        return requested

    manifest, _ = read_manifest(path)
    view = manifest.get('extra', {}).get('view')
    if view is None:
        raise DataError("Checkpoint {} does not record its view, pass --view".format(path))

    return view


def cmd_eval(args) -> list:
    """Prints the per-class Dice of a network, or of an existing prediction, on a labeled volume.

    Returns:
        list Dice per class"""

    volume = load_volume(args.volume, require_labels=True)

    if args.prediction is not None:
        predicted = load_volume(args.prediction).image.astype(np.uint8)
        if predicted.shape != volume.labels.shape:
            raise DataError("Prediction dims {} differ from volume dims {}".format(list(predicted.shape),
                list(volume.labels.shape)))
        num_classes = max(int(volume.labels.max()), int(predicted.max())) + 1
        num_classes = max(num_classes, len(defines.CLASS_NAMES))
        scores = list(score_predictions({'subject': predicted}, {'subject': volume}, num_classes)
            .per_subject['subject'])
        variant, view = "prediction", args.view or ""
    else:
        view = _checkpoint_view(args.checkpoint, args.view)
        net = load_checkpoint(args.checkpoint, args.variant)
        num_classes = net.config.num_classes
        scores = list(evaluate(net, {'subject': volume}, view).per_subject['subject'])
        variant = net.config.variant

    for cls in range(1, num_classes):
        print("{}: {:.4f}".format(class_name(cls, num_classes), scores[cls]))
    print("foreground mean: {:.4f}".format(float(np.mean(scores[1:]))))

    if args.out is not None:
        rows = [{'fold': 0, 'view': view, 'variant': variant, 'epoch': 0, 'class': class_name(cls, num_classes),
            'dice_mean': scores[cls], 'dice_std': 0.0, 'loss': np.nan} for cls in range(1, num_classes)]
        MetricsWriter(args.out).append(rows)

    return scores


def cmd_infer(args) -> None:
    """Writes the predicted label volume of a network."""

    view = _checkpoint_view(args.checkpoint, args.view)
    net = load_checkpoint(args.checkpoint, args.variant)
    volume = load_volume(args.volume)

    predicted = predict_volume(net, volume, view)
    save_volume(Volume(predicted, volume.spacing), args.out)
    logger.info("Prediction with dims %s written to %s", list(predicted.shape), header_path(args.out))


def cmd_paramcount(args, config: dict) -> None:
    """Prints the parameter count with its breakdown, for one or all variants."""

    model_config = ModelConfig.from_config(config)
    if args.input_shape is not None:
        model_config = model_config.with_input_shape(args.input_shape)
        model_config.validate()

    if not args.all:
        for line in param_count(SegNet.build(model_config, 0)).lines():
            print(line)
        return

    reports = {variant: count_variant(model_config, variant) for variant in defines.VARIANTS}
    for report in reports.values():
        for line in report.lines():
            print(line)

    totals = {variant: report.total for variant, report in reports.items()}
    compression = expected_compression_count(model_config.with_variant(defines.VARIANT_MDA))
    first_conv_extra = 9 * model_config.base_channels

    print("ordering cscse > mse > plain: {}".format(totals['cscse'] > totals['mse'] > totals['plain']))
    print("mda - mse: {:,} (compression {:,} + second input channel {:,})".format(totals['mda'] - totals['mse'],
        compression, first_conv_extra))

    if not totals['cscse'] > totals['mse'] > totals['plain']:
        raise ModelConfigError("Parameter counts violate the ordering cscse > mse > plain: {}".format(totals))
    if reports['mda'].breakdown[defines.PARAM_SECTION_COMPRESSION] != compression:
        raise ModelConfigError("Compression parameters differ from the closed form 2r(m+n)+4r")


def cmd_gradcheck(args) -> None:
    """Runs a verification scope and fails when any check exceeds the tolerance."""

    reports = verification.run_gradchecks(args.scope, args.seed, args.tol, args.max_entries)

    for name, report in reports.items():
        print("{}: {:.3e} {}".format(name, report.max_rel_error, "ok" if report.passed else "FAILED"))

    failed = [name for name, report in reports.items() if not report.passed]
    if failed:
        raise NumericalError("Gradient check failed for {}".format(", ".join(failed)))
