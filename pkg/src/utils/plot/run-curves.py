#!/bin/python3

"""
Plots training curves (mean training loss and validation Dice per epoch) of one
or more runs from their metrics.csv files, and optionally the per-class test
Dice of every variant as grouped bars.

Date: 2024-04-02
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import argparse
import logging
import os

import matplotlib.pyplot as plt
import numpy
import pandas as pd

logger = logging.getLogger(__name__)

parser = argparse.ArgumentParser()
parser.add_argument('runs', metavar='RUN_DIRS', nargs='+', type=str,
    help='run directories (or metrics.csv files) to plot')
parser.add_argument('-n', '--names', metavar='NAMES', nargs='+', type=str,
    help='legend names, the run directory names by default')
parser.add_argument('-f', '--fold', metavar='FOLD', type=int, default=None,
    help='plot a single fold instead of the mean over folds')
parser.add_argument('-b', '--bars', metavar='OUTFILE', type=str, default=None,
    help='path to write the per-class Dice bar chart PNG to')
parser.add_argument('-o', '--output', metavar='OUTFILE', type=str, default='curves.png',
    help='path to write PNG output file')
parser.add_argument('-l', '--log-level', type=str, default='info',
    help='logging level (error, info, debug, ...)')

args = parser.parse_args()

# Set logging level
logging.basicConfig(level=args.log_level.upper())


def load_metrics(path):
    metrics_file = os.path.join(path, "metrics.csv") if os.path.isdir(path) else path
    logger.info(f"loading metrics {metrics_file}")

    metrics = pd.read_csv(metrics_file)
    logger.info(f"loaded metrics {metrics_file}, {len(metrics)} records")

    return metrics


names = args.names or [os.path.basename(os.path.normpath(run)) for run in args.runs]
if len(names) != len(args.runs):
    parser.error("one name per run is required")

runs = [load_metrics(run) for run in args.runs]

fig, (ax_loss, ax_dice) = plt.subplots(1, 2, figsize=(10, 4))
ax_loss.set_xlabel("Epoch")
ax_loss.set_ylabel("Training loss (1 - soft Dice)")
ax_dice.set_xlabel("Epoch")
ax_dice.set_ylabel("Validation Dice")

for metrics, name in zip(runs, names):
    epochs = metrics[metrics['class'] == 'all']
    if args.fold is not None:
        epochs = epochs[epochs['fold'] == args.fold]

    if epochs.empty:
        logger.warning(f"run {name} has no epoch records")
        continue

    curves = epochs.groupby('epoch')[['loss', 'dice_mean']].mean()
    ax_loss.plot(curves.index, curves['loss'], label=name)

    if curves['dice_mean'].notna().any():
        ax_dice.plot(curves.index, curves['dice_mean'], label=name)

ax_loss.legend()
ax_dice.legend()
fig.savefig(args.output, bbox_inches='tight')
logger.info(f"curves written to {args.output}")

if args.bars is not None:
    # Test rows carry a class name and no loss
    tests = pd.concat([metrics[(metrics['class'] != 'all') & metrics['loss'].isna()] for metrics in runs])
    summary = tests.groupby(['variant', 'class'])['dice_mean'].agg(['mean', 'std']).reset_index()

    classes = list(dict.fromkeys(summary['class']))
    variants = list(dict.fromkeys(summary['variant']))
    positions = numpy.arange(len(classes))
    width = 0.8 / max(len(variants), 1)

    plt.figure(figsize=(6, 4))
    plt.xticks(positions + width * (len(variants) - 1) / 2, classes)
    plt.ylabel("Dice")

    for i, variant in enumerate(variants):
        rows = summary[summary['variant'] == variant].set_index('class').reindex(classes)
        plt.bar(positions + i * width, rows['mean'], width, yerr=rows['std'].fillna(0.0), label=variant)

    plt.legend()
    plt.savefig(args.bars, bbox_inches='tight')
    logger.info(f"bars written to {args.bars}")
