"""
Dice metric and loss, Adam, the training loop, evaluation and metrics reporting.

Date: 2024-03-18
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

from train_eval.dice import dice_score, dice_loss, one_hot, DICE_SMOOTHING
from train_eval.optim import AdamState, adam_step, ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from train_eval.report import MetricsWriter, metrics_row, metrics_frame, read_metrics, summarize, CLASS_ALL
from train_eval.trainer import (TrainConfig, FitResult, EvalResult, fit, evaluate, score_predictions, predict_volume,
    evaluation_rows, run_fold, cross_validate, fit_input_shape, class_name)
