"""
Verification of analytic gradients against central finite differences.

Date: 2024-03-09
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import logging
import numpy as np

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from tensor_engine import ops, settings
from tensor_engine.tensor import Tensor

logger = logging.getLogger(__name__)

GRADCHECK_EPS   = 1e-6
GRADCHECK_TOL   = 1e-4
GRADCHECK_FLOOR = 1e-5


@dataclass
class GradCheckReport:
    """Outcome of a gradient check."""
    max_rel_error: float                            # Largest relative error over all checked entries
    tol:           float                            # Tolerance the error is compared against
    per_input:     dict = field(default_factory=dict)   # Largest relative error per input name
    entries:       int = 0                          # Number of checked scalar entries

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error)) and self.max_rel_error <= self.tol


def _scalarize(out: Tensor, projection: np.ndarray | None) -> Tensor:
    """Reduces a non-scalar output to a scalar by a fixed random projection, so every output entry contributes."""

    if out.size == 1:
        return out

    return ops.sum(ops.mul(out, Tensor(projection)))


def grad_check(f: Callable[..., Tensor], inputs, eps: float = GRADCHECK_EPS, tol: float = GRADCHECK_TOL,
    floor: float = GRADCHECK_FLOOR, max_entries: int | None = None, seed: int = 0) -> GradCheckReport:
    """Compares the gradient computed by backward() with central differences (f(x+eps) - f(x-eps)) / 2eps.

    Relative error of an entry is |a - n| / max(|a|, |n|, floor). Run in f64 precision, the check is unreliable
    in f32.

    Parameters:
        f           Function of the input tensors (positional, in the given order) returning a Tensor
        inputs      A Tensor, a sequence of Tensors or a name -> Tensor mapping
        eps         Finite difference step
        tol         Maximum accepted relative error
        floor       Denominator floor for entries with vanishing gradients
        max_entries Check at most this many randomly chosen entries per input, None for all
        seed        Seed of the output projection and entry sampling

    Returns:
        GradCheckReport Maximum relative error and pass/fail"""

    if isinstance(inputs, Tensor):
        named = {"x": inputs}
    elif isinstance(inputs, Mapping):
        named = dict(inputs)
    else:
        named = {"x{}".format(idx): tensor for idx, tensor in enumerate(inputs)}

    if settings.get_precision() != "f64":
        logger.warning("Gradient check running in %s precision, results are unreliable", settings.get_precision())

    names = list(named.keys())
    base = [np.array(named[name].data, dtype=np.float64) for name in names]
    rng = np.random.default_rng(seed)

    # Evaluate once for the output shape to fix the projection
    sample = f(*[Tensor(array) for array in base])
    projection = None if sample.size == 1 else rng.standard_normal(sample.shape)

    def evaluate(arrays: Sequence[np.ndarray]) -> float:
        return _scalarize(f(*[Tensor(array) for array in arrays]), projection).item()

    # Analytic gradients
    leaves = [Tensor(array, requires_grad=True, name=name) for name, array in zip(names, base)]
    _scalarize(f(*leaves), projection).backward()

    report = GradCheckReport(max_rel_error=0.0, tol=tol)

    for idx, name in enumerate(names):
        analytic = leaves[idx].grad if leaves[idx].grad is not None else np.zeros_like(base[idx])
        flat_size = base[idx].size

        if max_entries is not None and flat_size > max_entries:
            entries = np.sort(rng.choice(flat_size, size=max_entries, replace=False))
        else:
            entries = np.arange(flat_size)

        worst = 0.0

        for entry in entries:
            perturbed = [array.copy() for array in base]
            flat = perturbed[idx].reshape(-1)

            flat[entry] = base[idx].reshape(-1)[entry] + eps
            f_plus = evaluate(perturbed)
            flat[entry] = base[idx].reshape(-1)[entry] - eps
            f_minus = evaluate(perturbed)

            numeric = (f_plus - f_minus) / (2.0 * eps)
            exact = float(analytic.reshape(-1)[entry])
            rel_error = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            worst = max(worst, rel_error if np.isfinite(rel_error) else np.inf)

        report.per_input[name] = worst
        report.entries += len(entries)
        report.max_rel_error = max(report.max_rel_error, worst)

    logger.debug("Gradient check over %d entries: max relative error %.3e", report.entries, report.max_rel_error)

    return report
