"""
Binary checkpoint codec.

Layout:
    4 bytes   magic "MDA1"
    4 bytes   little-endian u32 manifest length L
    L bytes   UTF-8 JSON manifest {"config": {...}, "tensors": [{"name", "shape", "dtype", "offset"}], ...}
    rest      raw little-endian tensor buffers, offsets relative to the end of the manifest

Date: 2024-03-15
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import json
import logging
import struct
import numpy as np

from common.exceptions import CheckpointError, ModelConfigError
from segnet.model_config import ModelConfig
from segnet.network import SegNet
from tensor_engine.tensor import Tensor

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"MDA1"
CHECKPOINT_DTYPES = {"f32": "<f4", "f64": "<f8"}


def _dtype_name(array: np.ndarray) -> str:
    return "f64" if array.dtype == np.float64 else "f32"


def save_checkpoint(net: SegNet, path: str, extra: dict | None = None) -> None:
    """Writes the configuration and every registered tensor of a network.

    Parameters:
        net   Network to save
        path  Destination file
        extra Additional JSON-serialisable manifest entries (epoch, metrics, ...)"""

    entries = []
    buffers = []
    offset = 0

    for name, tensor in net.params.items():
        dtype = _dtype_name(tensor.data)
        buffer = np.ascontiguousarray(tensor.data, dtype=CHECKPOINT_DTYPES[dtype]).tobytes()
        entries.append({'name': name, 'shape': list(tensor.shape), 'dtype': dtype, 'offset': offset})
        buffers.append(buffer)
        offset += len(buffer)

    manifest = {'config': net.config.to_dict(), 'tensors': entries}
    if extra:
        manifest['extra'] = extra

    encoded = json.dumps(manifest, sort_keys=True).encode('utf-8')

    with open(path, 'wb') as stream:
        stream.write(CHECKPOINT_MAGIC)
        stream.write(struct.pack('<I', len(encoded)))
        stream.write(encoded)
        for buffer in buffers:
            stream.write(buffer)

    logger.info("Checkpoint with %d tensors written to %s", len(entries), path)


def read_manifest(path: str) -> tuple:
    """Reads the manifest and the raw tensor payload of a checkpoint.

    Raises:
        CheckpointError if the file is not a checkpoint or is truncated

    Returns:
        (dict, bytes) Manifest and payload"""

    try:
        with open(path, 'rb') as stream:
            content = stream.read()
    except OSError as exc:
        raise CheckpointError("Cannot read checkpoint {}: {}".format(path, exc)) from exc

    if content[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("{} is not a checkpoint (bad magic {!r})".format(path, content[:4]))
    if len(content) < 8:
        raise CheckpointError("Checkpoint {} is truncated".format(path))

    (length,) = struct.unpack('<I', content[4:8])

    try:
        manifest = json.loads(content[8:8 + length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("Checkpoint {} has a corrupt manifest: {}".format(path, exc)) from exc

    return manifest, content[8 + length:]


def _describe(net: SegNet) -> str:
    return ", ".join("{}{}".format(name, list(tensor.shape)) for name, tensor in net.params.items())


def load_checkpoint(path: str, expected_variant: str | None = None) -> SegNet:
    """Restores a network saved by save_checkpoint(). The tensors are validated against a network built from the
    embedded configuration.

    Parameters:
        path             Checkpoint file
        expected_variant Variant the caller needs, None to accept any

    Raises:
        CheckpointError on malformed files, variant mismatch or a manifest not matching the configuration

    Returns:
        SegNet Network with the stored parameters"""

    manifest, payload = read_manifest(path)

    try:
        config = ModelConfig.from_dict(manifest['config'])
    except (KeyError, ModelConfigError) as exc:
        raise CheckpointError("Checkpoint {} has an invalid configuration: {}".format(path, exc)) from exc

    if expected_variant is not None and config.variant != expected_variant:
        try:
            expected = _describe(SegNet.build(config.with_variant(expected_variant), 0))
        except ModelConfigError as exc:
            expected = "unavailable ({})".format(exc)
        raise CheckpointError("Checkpoint {} holds variant {} but variant {} was expected; expected manifest: "
            "{}".format(path, config.variant, expected_variant, expected))

    net = SegNet.build(config, 0)
    stored = {entry['name']: entry for entry in manifest.get('tensors', [])}

    if set(stored) != set(net.params.names()):
        raise CheckpointError("Checkpoint {} tensors do not match the {} network; expected manifest: {}".format(
            path, config.variant, _describe(net)))

    restored = {}
    for name, tensor in net.params.items():
        entry = stored[name]
        if tuple(entry['shape']) != tensor.shape or entry['dtype'] not in CHECKPOINT_DTYPES:
            raise CheckpointError("Checkpoint {} tensor {} is {} {} but the network expects {}; expected manifest: "
                "{}".format(path, name, entry['dtype'], entry['shape'], list(tensor.shape), _describe(net)))

        dtype = np.dtype(CHECKPOINT_DTYPES[entry['dtype']])
        count = int(np.prod(entry['shape']))
        end = entry['offset'] + count * dtype.itemsize

        if entry['offset'] < 0 or end > len(payload):
            raise CheckpointError("Checkpoint {} is truncated at tensor {}".format(path, name))

        values = np.frombuffer(payload, dtype=dtype, count=count, offset=entry['offset']).reshape(entry['shape'])
        restored[name] = Tensor(values, requires_grad=True)

    net.params.update(restored)
    logger.info("Restored %s network with %d tensors from %s", config.variant, len(restored), path)

    return net
