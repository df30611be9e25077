"""
Slice-wise compression of a slice's neighbourhood into one residual slice.

For slice i of a view [m, n, p], the 2r difference images I(i+j) - I(i),
j in [-r..-1, 1..r], are ordered by their L1 norm and condensed into
    I_bar = sum_k w_k * D_k,   w = softmax(z)
where z comes from the same learned depth-wise squeeze as the cSE branch of the
MSE block (an m x 1 filter, then an n x 1 filter per difference image). The
network input is the pair (I(i), I_bar(i)) stacked as two channels.

Date: 2024-03-12
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import logging
import numpy as np

from cachetools import LRUCache
from dataclasses import dataclass

from attention_blocks.blocks import depthwise_squeeze
from common import defines
from common.exceptions import ShapeError
from tensor_engine import initializers
from tensor_engine.ops import concat, rescale, reshape, sum as tensor_sum
from tensor_engine.tensor import Tensor

logger = logging.getLogger(__name__)

BOUNDARY_MIRROR = "mirror"
BOUNDARY_CLAMP  = "clamp"
BOUNDARY_ZERO   = "zero"
BOUNDARY_POLICIES = [BOUNDARY_MIRROR, BOUNDARY_CLAMP, BOUNDARY_ZERO]

ORDERING_DESCENDING = "descending"
ORDERING_ASCENDING  = "ascending"
ORDERINGS = [ORDERING_DESCENDING, ORDERING_ASCENDING]

# Module configuration settings
MODULE_NAME = "slice_compression"
MODULE_CONFIG = {
    defines.CONF_PARAMS_MANDATORY: [],
    defines.CONF_PARAMS_DEFAULTS: {'radius': 5, 'boundary_policy': BOUNDARY_MIRROR, 'ordering': ORDERING_DESCENDING,
        'cache_size': 4096},
    defines.CONF_PARAMS_INTS: ['radius', 'cache_size'],
    defines.CONF_PARAMS_FLOATS: None,
    defines.CONF_PARAMS_STRINGS: {'boundary_policy': BOUNDARY_POLICIES, 'ordering': ORDERINGS},
    defines.CONF_PARAMS_BOOLS: None,
    defines.CONF_PARAMS_LISTS: None
}


@dataclass(frozen=True)
class CompressionConfig:
    """Neighbourhood radius, boundary handling and ordering of the difference images."""
    radius:          int = 5
    boundary_policy: str = BOUNDARY_MIRROR
    ordering:        str = ORDERING_DESCENDING


    @property
    def channels(self) -> int:
        return 2 * self.radius


    @classmethod
    def from_config(cls, config: dict) -> "CompressionConfig":
        section = config[MODULE_NAME]
        return cls(section['radius'], section['boundary_policy'], section['ordering'])


    def validate(self, num_slices: int | None = None) -> None:
        """Checks the configuration against the slice count of a view.

        Raises:
            ShapeError if r < 1, 2r >= p, or an unknown policy or ordering is set"""

        if self.radius < 1:
            raise ShapeError("Compression radius must be >= 1, got {}".format(self.radius))
        if self.boundary_policy not in BOUNDARY_POLICIES:
            raise ShapeError("Unknown boundary policy \"{}\"".format(self.boundary_policy))
        if self.ordering not in ORDERINGS:
            raise ShapeError("Unknown ordering \"{}\"".format(self.ordering))
        if num_slices is not None and 2 * self.radius >= num_slices:
            raise ShapeError("Compression radius {} too large for a view of {} slices (2r must be < p)".format(
                self.radius, num_slices))


@dataclass
class DiffStack:
    """Difference images of one slice as channels."""
    diffs:   np.ndarray     # [m, n, 2r]
    l1:      np.ndarray     # [2r] sum of absolute values per channel
    offsets: np.ndarray     # [2r] signed neighbour offset j of every channel
    order:   np.ndarray     # [2r] permutation applied to the unordered stack (identity when unordered)


    def as_tensor(self) -> Tensor:
        return Tensor(self.diffs)


def neighbour_index(i: int, offset: int, num_slices: int, policy: str) -> int | None:
    """Resolves the slice index of neighbour i+offset; None means an all-zero neighbour (zero policy)."""

    idx = i + offset

    if 0 <= idx < num_slices:
        return idx

    if policy == BOUNDARY_MIRROR:
        # Reflection about the edge slice, the edge itself is not repeated
        return -idx if idx < 0 else 2 * (num_slices - 1) - idx
    if policy == BOUNDARY_CLAMP:
        return min(max(idx, 0), num_slices - 1)

    return None


def neighborhood_diffs(volume_view: np.ndarray, i: int, cfg: CompressionConfig) -> DiffStack:
    """Builds the unordered stack of 2r difference images I(i+j) - I(i) around slice i.

    Parameters:
        volume_view [m, n, p] view with slices along the last axis
        i           Slice index
        cfg         Compression configuration

    Returns:
        DiffStack Channels ordered by offset j = -r..-1, 1..r"""

    if volume_view.ndim != 3:
        raise ShapeError("Volume view must be [m, n, p], got {}".format(list(volume_view.shape)))

    num_slices = volume_view.shape[2]
    cfg.validate(num_slices)

    if not 0 <= i < num_slices:
        raise ShapeError("Slice index {} out of range for {} slices".format(i, num_slices))

    center = volume_view[:, :, i]
    offsets = np.array([j for j in range(-cfg.radius, cfg.radius + 1) if j != 0])
    diffs = np.empty(center.shape + (len(offsets),), dtype=volume_view.dtype)

    for channel, offset in enumerate(offsets):
        idx = neighbour_index(i, int(offset), num_slices, cfg.boundary_policy)
        neighbour = volume_view[:, :, idx] if idx is not None else np.zeros_like(center)
        diffs[:, :, channel] = neighbour - center

    l1 = np.abs(diffs).sum(axis=(0, 1), dtype=np.float64)

    return DiffStack(diffs, l1, offsets, np.arange(len(offsets)))


def order_by_l1(stack: DiffStack, cfg: CompressionConfig) -> DiffStack:
    """Permutes the channels so that L1 norms are monotone under the configured ordering. Ties are broken by the
    signed offset j, ascending.

    Parameters:
        stack Difference stack (any channel order)
        cfg   Compression configuration

    Returns:
        DiffStack Ordered stack; its order field composes the applied permutation with the incoming one"""

    primary = -stack.l1 if cfg.ordering == ORDERING_DESCENDING else stack.l1
    permutation = np.lexsort((stack.offsets, primary))

    return DiffStack(stack.diffs[:, :, permutation], stack.l1[permutation], stack.offsets[permutation],
        stack.order[permutation])


@dataclass
class CompressionParams:
    """Learned squeeze filters of the compression module, bound to (m, n, 2r)."""
    filter_h: Tensor        # [m, 2r]
    filter_w: Tensor        # [n, 2r]
    bias_h:   Tensor        # [2r]
    bias_w:   Tensor        # [2r]

    TENSOR_FIELDS = ("filter_h", "filter_w", "bias_h", "bias_w")


    @property
    def bound_shape(self) -> tuple:
        return (self.filter_h.shape[0], self.filter_w.shape[0], self.filter_h.shape[1])


    @staticmethod
    def expected_count(height: int, width: int, radius: int) -> int:
        """Closed-form parameter count 2r(m+n) + 4r."""

        return 2 * radius * (height + width) + 4 * radius


    @classmethod
    def initialize(cls, height: int, width: int, radius: int) -> "CompressionParams":
        """Averaging squeeze filters and zero biases, i.e. every difference image starts weighted by its mean.
        Values do not depend on a seed."""

        channels = 2 * radius

        return cls(
            Tensor(initializers.averaging((height, channels))),
            Tensor(initializers.averaging((width, channels))),
            Tensor(initializers.zeros((channels,))),
            Tensor(initializers.zeros((channels,)))
        )


    def named_tensors(self) -> dict:
        return {name: getattr(self, name) for name in self.TENSOR_FIELDS}


    def with_tensors(self, named: dict) -> "CompressionParams":
        return CompressionParams(*(named.get(name, getattr(self, name)) for name in self.TENSOR_FIELDS))


    def param_count(self) -> int:
        return int(sum(tensor.size for tensor in self.named_tensors().values()))


def _check_params(params: CompressionParams | None, diffs_shape: tuple) -> None:
    if params is None:
        raise ShapeError("Compression parameters are not bound")

    if tuple(diffs_shape[1:]) != params.bound_shape:
        raise ShapeError("Compression parameters bound to (m, n, 2r) = {} but the difference stack is {}".format(
            list(params.bound_shape), list(diffs_shape[1:])))


def compression_weights(ordered_diffs: np.ndarray, params: CompressionParams):
    """Squeeze vector of a batch of ordered stacks [N, m, n, 2r]; w has shape [N, 1, 1, 2r]."""

    _check_params(params, ordered_diffs.shape)

    return depthwise_squeeze(Tensor(ordered_diffs), params.filter_h, params.bias_h, params.filter_w, params.bias_w)


def compress_batch(ordered_diffs: np.ndarray, params: CompressionParams) -> Tensor:
    """Weighted average of the ordered difference images of a batch.

    Parameters:
        ordered_diffs [N, m, n, 2r] ordered stacks
        params        Compression parameters

    Returns:
        Tensor [N, m, n] compressed slices, differentiable w.r.t. the parameters"""

    diffs = Tensor(ordered_diffs)
    weights = compression_weights(ordered_diffs, params).w

    # Softmax weights sum to one, so the weighted sum is already the weighted mean
    return tensor_sum(rescale(diffs, weights), axes=3)


def compress(volume_view: np.ndarray, i: int, params: CompressionParams, cfg: CompressionConfig) -> Tensor:
    """Compressed slice I_bar of slice i, shape [m, n]."""

    stack = order_by_l1(neighborhood_diffs(volume_view, i, cfg), cfg)
    compressed = compress_batch(stack.diffs[None], params)

    return reshape(compressed, compressed.shape[1:])


def make_input_batch(slices: np.ndarray, ordered_diffs: np.ndarray, params: CompressionParams) -> Tensor:
    """Two-channel network input [N, m, n, 2]: channel 0 the slices, channel 1 their compressed neighbourhoods."""

    if slices.shape != ordered_diffs.shape[:3]:
        raise ShapeError("Slices {} and difference stacks {} disagree on [N, m, n]".format(list(slices.shape),
            list(ordered_diffs.shape)))

    compressed = compress_batch(ordered_diffs, params)

    return concat([Tensor(slices[..., None]), reshape(compressed, compressed.shape + (1,))], axis=3)


def make_input_pair(volume_view: np.ndarray, i: int, params: CompressionParams, cfg: CompressionConfig) -> Tensor:
    """Network input of slice i, Tensor [m, n, 2] with channel 0 = I(i) and channel 1 = I_bar(i)."""

    stack = order_by_l1(neighborhood_diffs(volume_view, i, cfg), cfg)
    pair = make_input_batch(volume_view[None, :, :, i], stack.diffs[None], params)

    return reshape(pair, pair.shape[1:])


class OrderedDiffCache:
    """LRU cache of ordered difference stacks. Stacks do not depend on learned parameters, so they are computed
    once per (subject, view, slice, configuration) and reused across epochs.

    A (subject, view) pair is bound to the view array it was first seen with. When the same pair arrives with a
    different array, equal contents rebind it and different contents evict its stacks first."""

    def __init__(self, maxsize: int = 4096) -> None:
        self._cache   = LRUCache(maxsize=max(int(maxsize), 1))
        self._sources = {}      # (subject id, view) -> view array of the cached stacks
        self.hits     = 0
        self.misses   = 0


    def _bind_source(self, subject_id: str, view: str, volume_view: np.ndarray) -> None:
        source_key = (subject_id, view)
        bound = self._sources.get(source_key)

        if bound is volume_view:
            return

        if bound is not None and not (bound.shape == volume_view.shape and np.array_equal(bound, volume_view)):
            stale = [key for key in self._cache.keys() if key[:2] == source_key]
            for key in stale:
                del self._cache[key]
            logger.warning("Subject %s (%s) changed its volume, %d cached stacks dropped", subject_id, view,
                len(stale))

        self._sources[source_key] = volume_view


    def get(self, subject_id: str, view: str, volume_view: np.ndarray, i: int, cfg: CompressionConfig) -> DiffStack:
        self._bind_source(subject_id, view, volume_view)
        key = (subject_id, view, i, cfg.radius, cfg.boundary_policy, cfg.ordering)

        if key in self._cache:
            self.hits += 1
            return self._cache[key]

        self.misses += 1
        stack = order_by_l1(neighborhood_diffs(volume_view, i, cfg), cfg)
        self._cache[key] = stack

        return stack


    def clear(self) -> None:
        self._cache.clear()
        self._sources.clear()
        self.hits = self.misses = 0
