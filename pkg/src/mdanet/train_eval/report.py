"""
Metrics table with a fixed column order, appended to a CSV file by a single
serialised writer.

Date: 2024-03-19
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import os
import threading
import numpy as np
import pandas as pd

from common import defines

# Class column value of per-epoch loss rows
CLASS_ALL = "all"


def metrics_row(fold: int, view: str, variant: str, epoch: int, cls: str, dice_mean: float = np.nan,
    dice_std: float = np.nan, loss: float = np.nan) -> dict:
    return {'fold': fold, 'view': view, 'variant': variant, 'epoch': epoch, 'class': cls, 'dice_mean': dice_mean,
        'dice_std': dice_std, 'loss': loss}


def metrics_frame(rows: list) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=defines.METRICS_COLUMNS)


class MetricsWriter:
    """Append-only CSV writer. Appends from concurrent threads are serialised by a lock."""

    def __init__(self, path: str) -> None:
        self.path  = path
        self._lock = threading.Lock()


    def append(self, rows: list) -> None:
        if not rows:
            return

        with self._lock:
            write_header = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
            metrics_frame(rows).to_csv(self.path, mode='a', header=write_header, index=False,
                float_format='%.6f')


def read_metrics(path: str) -> pd.DataFrame:
    return pd.read_csv(path)[defines.METRICS_COLUMNS]


def summarize(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard deviation over folds of the per-class evaluation Dice, per view and variant."""

    evaluation = frame[frame['class'] != CLASS_ALL]

    return evaluation.groupby(['view', 'variant', 'class'], sort=True)['dice_mean'].agg(['mean', 'std']) \
        .reset_index()
