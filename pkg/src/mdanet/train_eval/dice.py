"""
Dice score of label masks and the differentiable soft Dice loss.

Date: 2024-03-18
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import numpy as np

from common import defines
from common.exceptions import ShapeError
from tensor_engine.ops import add, div, mul, sum as tensor_sum
from tensor_engine.tensor import Tensor

DICE_SMOOTHING = 1e-6


def dice_score(pred: np.ndarray, true: np.ndarray, cls: int) -> float:
    """Hard Dice 2|P n T| / (|P| + |T|) of one class; two empty masks score 1.0.

    Parameters:
        pred Predicted labels
        true Reference labels of the same shape
        cls  Class index

    Returns:
        float Dice in [0, 1]"""

    if pred.shape != true.shape:
        raise ShapeError("Dice of label maps with different shapes {} and {}".format(list(pred.shape),
            list(true.shape)))

    pred_mask = pred == cls
    true_mask = true == cls
    total = int(pred_mask.sum()) + int(true_mask.sum())

    if total == 0:
        return 1.0

    return 2.0 * int(np.logical_and(pred_mask, true_mask).sum()) / total


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """[..., ] integer labels to [..., num_classes] indicators."""

    if labels.size and int(labels.max()) >= num_classes:
        raise ShapeError("Label value {} out of range for {} classes".format(int(labels.max()), num_classes))

    return np.eye(num_classes)[labels.astype(np.int64)]


def dice_loss(probabilities: Tensor, targets: np.ndarray, eps: float = DICE_SMOOTHING) -> Tensor:
    """1 - mean over foreground classes of the soft Dice, accumulated over the whole batch.

    Parameters:
        probabilities [N, m, n, K] class probabilities
        targets       [N, m, n, K] one-hot targets
        eps           Smoothing added to numerator and denominator

    Returns:
        Tensor Scalar loss in [0, 1]"""

    if probabilities.shape != targets.shape:
        raise ShapeError("dice_loss: probabilities {} and targets {} differ".format(list(probabilities.shape),
            list(targets.shape)))

    num_classes = probabilities.shape[-1]
    spatial = tuple(range(probabilities.ndim - 1))

    target_tensor = Tensor(targets)
    intersection = tensor_sum(mul(probabilities, target_tensor), axes=spatial)
    denominator = add(add(tensor_sum(probabilities, axes=spatial), Tensor(targets.sum(axis=spatial))), eps)
    per_class = div(add(mul(intersection, 2.0), eps), denominator)

    foreground = np.ones(num_classes)
    foreground[defines.CLASS_BACKGROUND] = 0.0
    mean_dice = mul(tensor_sum(mul(per_class, Tensor(foreground))), 1.0 / (num_classes - 1))

    return add(mul(mean_dice, -1.0), 1.0)
