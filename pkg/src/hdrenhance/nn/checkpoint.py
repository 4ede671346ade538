"""NNCP1 checkpoint files.

Layout: the 5-byte magic ``NNCP1``, a little-endian uint64 manifest length,
the UTF-8 JSON manifest, then raw little-endian float32 buffers in manifest
order. Offsets in the manifest are relative to the start of the data block.
"""

import json
import os
import struct
import tempfile

import numpy as np

from ..errors import CheckpointError, ConfigError
from .network import EnhancementNetwork, buffer_names, config_from_dict, config_to_dict, param_names

MAGIC = b"NNCP1"


def dumps_checkpoint(net, extra=None):
    tensors = []
    blobs = []
    offset = 0
    for spec in net.specs.values():
        for name in param_names(spec) + buffer_names(spec):
            arr = np.ascontiguousarray(net.params[name], dtype="<f4")
            tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": arr.nbytes})
            blobs.append(arr.tobytes())
            offset += arr.nbytes
    manifest = {
        "format": "NNCP1",
        "dtype": "f32",
        "architecture": config_to_dict(net.cfg),
        "layers": [spec.name for spec in net.specs.values()],
        "tensors": tensors,
    }
    if extra:
        manifest["extra"] = extra
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(blobs)


def loads_checkpoint(data):
    """Rebuild an :class:`EnhancementNetwork` from checkpoint bytes.

    Every tensor shape is validated against the manifest and the
    architecture it declares.
    """
    if not data.startswith(MAGIC) or len(data) < len(MAGIC) + 8:
        raise CheckpointError("not an NNCP1 checkpoint")
    (length,) = struct.unpack_from("<Q", data, len(MAGIC))
    start = len(MAGIC) + 8
    if start + length > len(data):
        raise CheckpointError("checkpoint manifest is truncated")
    try:
        manifest = json.loads(data[start:start + length].decode("utf-8"))
        cfg = config_from_dict(manifest["architecture"])
        tensors = manifest["tensors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"unreadable checkpoint manifest: {exc}") from exc
    if manifest.get("dtype") != "f32":
        raise CheckpointError(f"unsupported checkpoint dtype {manifest.get('dtype')!r}")
    body = memoryview(data)[start + length:]
    params = {}
    for entry in tensors:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        if entry["nbytes"] != 4 * count or entry["offset"] + entry["nbytes"] > len(body):
            raise CheckpointError(f"tensor {entry['name']} does not fit the checkpoint body")
        params[entry["name"]] = np.frombuffer(body, "<f4", count, entry["offset"]).reshape(shape).astype(np.float32)
    expected = sum(e["nbytes"] for e in tensors)
    if expected != len(body):
        raise CheckpointError("checkpoint body size does not match the manifest")
    try:
        net = EnhancementNetwork(cfg, params)
    except ConfigError as exc:
        raise CheckpointError(str(exc)) from exc
    wanted = set(net.params)
    if set(params) != wanted:
        raise CheckpointError(f"unexpected tensors {sorted(set(params) - wanted)}")
    return net


def read_manifest(path):
    with open(path, "rb") as fh:
        data = fh.read(len(MAGIC) + 8)
        if not data.startswith(MAGIC) or len(data) < len(MAGIC) + 8:
            raise CheckpointError("not an NNCP1 checkpoint")
        (length,) = struct.unpack_from("<Q", data, len(MAGIC))
        return json.loads(fh.read(length).decode("utf-8"))


def save_checkpoint(path, net, extra=None):
    """Write atomically: a crash never leaves a half-written checkpoint."""
    data = dumps_checkpoint(net, extra)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read())
