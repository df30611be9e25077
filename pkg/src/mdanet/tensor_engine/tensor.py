"""
Dense tensor storage and reverse-mode automatic differentiation.

A Tensor wraps an immutable numpy array. Operations are subclasses of Function:
applying one records the function as the creator of its output, which makes the
output a node of the autodiff graph. Calling backward() on a scalar tensor
orders the graph topologically and runs every node's backward rule exactly once,
in reverse order, accumulating gradients additively across fan-out.

Date: 2024-03-07
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import logging
import numpy as np

from dataclasses import dataclass, field
from typing import Any, Sequence

from common.exceptions import NumericalError, ShapeError
from tensor_engine import settings

logger = logging.getLogger(__name__)


class Function:
    """Base class for differentiable operations.

    Subclasses implement forward() on raw arrays and backward() returning one gradient array (or None) per input
    tensor, in the order the tensors were passed to apply()."""

    def __init__(self, *tensors: "Tensor") -> None:
        self.tensors = tensors      # Input tensors of the operation


    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError("Forward pass not implemented for {}".format(type(self).__name__))


    def backward(self, grad: np.ndarray) -> tuple:
        raise NotImplementedError("Backward pass not implemented for {}".format(type(self).__name__))


    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        """Creates the function instance, runs its forward pass and wraps the result in a graph-connected Tensor.

        Parameters:
            tensors Input tensors
            kwargs  Non-differentiable arguments of the forward pass

        Returns:
            Tensor Output tensor, recorded in the graph when any input requires a gradient"""

        func = cls(*tensors)
        out_data = func.forward(*(tensor.data for tensor in tensors), **kwargs)

        if settings.anomaly_detection_enabled() and not np.all(np.isfinite(out_data)):
            raise NumericalError("Non-finite values produced by {}".format(cls.__name__))

        requires_grad = any(tensor.requires_grad for tensor in tensors)

        return Tensor(out_data, requires_grad=requires_grad, creator=func if requires_grad else None)


class Tensor:
    """Dense n-dimensional array participating in the reverse-mode differentiation graph."""

    def __init__(self, data, requires_grad: bool = False, creator: Function | None = None,
        name: str | None = None) -> None:
        """Creates a tensor. Leaf tensors copy their data, operation outputs take ownership of it.

        Parameters:
            data          Array-like content, converted to the active engine precision
            requires_grad Whether gradients w.r.t. this tensor are computed
            creator       Function that produced this tensor, None for leaves
            name          Optional name used in messages"""

        self.data = (np.array(data, dtype=settings.get_dtype()) if creator is None
            else np.asarray(data, dtype=settings.get_dtype()))
        self.data.flags.writeable = False

        self.requires_grad = bool(requires_grad)
        self.creator       = creator
        self.grad          = None
        self.name          = name


    @property
    def shape(self) -> tuple:
        return self.data.shape


    @property
    def ndim(self) -> int:
        return self.data.ndim


    @property
    def size(self) -> int:
        return self.data.size


    def numpy(self) -> np.ndarray:
        """Returns a writable copy of the data."""

        return np.array(self.data)


    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)


    def detach(self) -> "Tensor":
        """Returns a leaf tensor sharing the values but not the graph."""

        return Tensor(self.data, requires_grad=False, name=self.name)


    def zero_grad(self) -> None:
        self.grad = None


    def backward(self) -> None:
        """Back-propagates from this scalar tensor, populating .grad of every tensor in the graph that requires it.

        Raises:
            ShapeError if this tensor holds more than one element"""

        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar loss, got shape {}".format(list(self.shape)))

        graph = AutodiffGraph.from_output(self)
        pending = {id(self): np.ones_like(self.data)}

        for node in reversed(graph.nodes):
            node_grad = pending.pop(id(node), None)

            if node_grad is None:
                continue

            node.grad = node_grad if node.grad is None else node.grad + node_grad

            if node.creator is None:
                continue

            input_grads = node.creator.backward(node_grad)

            for tensor, tensor_grad in zip(node.creator.tensors, input_grads):
                if tensor_grad is None or not tensor.requires_grad:
                    continue

                if tensor_grad.shape != tensor.shape:
                    raise ShapeError("{} produced a gradient of shape {} for an input of shape {}".format(
                        type(node.creator).__name__, list(tensor_grad.shape), list(tensor.shape)))

                key = id(tensor)
                pending[key] = tensor_grad if key not in pending else pending[key] + tensor_grad


    def sum(self, axes=None, keepdims: bool = False) -> "Tensor":
        from tensor_engine import ops
        return ops.sum(self, axes, keepdims)


    def mean(self, axes=None, keepdims: bool = False) -> "Tensor":
        from tensor_engine import ops
        return ops.mean(self, axes, keepdims)


    def reshape(self, *shape) -> "Tensor":
        from tensor_engine import ops
        return ops.reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)


    def __add__(self, other) -> "Tensor":
        from tensor_engine import ops
        return ops.add(self, other)


    def __radd__(self, other) -> "Tensor":
        from tensor_engine import ops
        return ops.add(self, other)


    def __sub__(self, other) -> "Tensor":
        from tensor_engine import ops
        return ops.sub(self, other)


    def __rsub__(self, other) -> "Tensor":
        from tensor_engine import ops
        return ops.add(ops.mul(self, -1.0), other)


    def __mul__(self, other) -> "Tensor":
        from tensor_engine import ops
        return ops.mul(self, other)


    def __rmul__(self, other) -> "Tensor":
        from tensor_engine import ops
        return ops.mul(self, other)


    def __truediv__(self, other) -> "Tensor":
        from tensor_engine import ops
        return ops.div(self, other)


    def __neg__(self) -> "Tensor":
        from tensor_engine import ops
        return ops.mul(self, -1.0)


    def __repr__(self) -> str:
        return "Tensor(shape={}, dtype={}, requires_grad={}{})".format(list(self.shape), self.data.dtype,
            self.requires_grad, ", name={}".format(self.name) if self.name else "")


@dataclass
class AutodiffGraph:
    """Recorded operations reachable from an output, in topological order (inputs precede their consumers)."""
    nodes: list = field(default_factory=list)


    @classmethod
    def from_output(cls, output: Tensor) -> "AutodiffGraph":
        """Collects all gradient-requiring tensors the output depends on. Iterative post-order DFS, so deep
        networks do not hit the recursion limit.

        Parameters:
            output Tensor to start from

        Returns:
            AutodiffGraph Topologically ordered nodes, output last"""

        order   = []
        visited = set()
        stack   = [(output, False)]

        while stack:
            tensor, expanded = stack.pop()

            if expanded:
                order.append(tensor)
                continue

            if id(tensor) in visited or not tensor.requires_grad:
                continue

            visited.add(id(tensor))
            stack.append((tensor, True))

            if tensor.creator is not None:
                for parent in reversed(tensor.creator.tensors):
                    if id(parent) not in visited:
                        stack.append((parent, False))

        return cls(order)


def as_tensor(value) -> Tensor:
    """Wraps non-tensor values into a constant leaf tensor."""

    return value if isinstance(value, Tensor) else Tensor(value)


def check_same_shape(first: Sequence[int], second: Sequence[int], op_name: str) -> None:
    """Raises ShapeError naming the first axis on which two shapes differ.

    Parameters:
        first   Shape of the first operand
        second  Shape of the second operand
        op_name Operation name for the message"""

    if tuple(first) == tuple(second):
        return

    if len(first) != len(second):
        raise ShapeError("{}: rank mismatch, {} vs {}".format(op_name, list(first), list(second)))

    axis = next(idx for idx, (a, b) in enumerate(zip(first, second)) if a != b)

    raise ShapeError("{}: extent mismatch on axis {} ({} vs {}), shapes {} and {}".format(op_name, axis,
        first[axis], second[axis], list(first), list(second)))
