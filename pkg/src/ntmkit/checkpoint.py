"""Versioned binary checkpoints with bit-exact round trips.

Layout (all integers little-endian):

    8 bytes   magic "NTMCKPT1"
    u32       length of the UTF-8 JSON metadata block
    bytes     metadata: model configuration, task info, optional training
              state (optimizer name/hyperparameters, seed, instances seen)
    u32       number of named arrays
    per array:
        u32   name length, then UTF-8 name
        u32   rank, then u32 dims[rank]
        f64   data, row-major

Model parameters use their model names; optimizer slots are stored under
an "opt." prefix.  Parameter payloads are raw float64 bytes, so a loaded
model reproduces the saved one bit for bit.
"""

import io
import json
import struct

import numpy as np

from .model import NtmModel

MAGIC = b"NTMCKPT1"


class CheckpointError(ValueError):
    """Malformed, truncated, or mismatched checkpoint file."""


def _write_u32(fh, value):
    fh.write(struct.pack("<I", value))


def _read_exact(fh, n, what):
    raw = fh.read(n)
    if len(raw) != n:
        raise CheckpointError("truncated checkpoint while reading %s" % what)
    return raw


def _read_u32(fh, what):
    return struct.unpack("<I", _read_exact(fh, 4, what))[0]


def write_arrays(fh, meta, arrays):
    fh.write(MAGIC)
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    _write_u32(fh, len(blob))
    fh.write(blob)
    _write_u32(fh, len(arrays))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        encoded = name.encode("utf-8")
        _write_u32(fh, len(encoded))
        fh.write(encoded)
        _write_u32(fh, arr.ndim)
        for dim in arr.shape:
            _write_u32(fh, dim)
        fh.write(arr.astype("<f8").tobytes())


def read_arrays(fh):
    """Low-level reader; returns (meta dict, name -> float64 array)."""
    magic = _read_exact(fh, len(MAGIC), "magic")
    if magic != MAGIC:
        if magic[:7] == MAGIC[:7]:
            raise CheckpointError(
                "unsupported checkpoint version %r (expected %r)" % (magic, MAGIC)
            )
        raise CheckpointError("bad magic %r: not a checkpoint file" % (magic,))
    meta_len = _read_u32(fh, "metadata length")
    try:
        meta = json.loads(_read_exact(fh, meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("corrupt metadata block: %s" % exc) from exc
    count = _read_u32(fh, "array count")
    arrays = {}
    for idx in range(count):
        name_len = _read_u32(fh, "name length of array %d" % idx)
        name = _read_exact(fh, name_len, "name of array %d" % idx).decode("utf-8")
        rank = _read_u32(fh, "rank of %s" % name)
        shape = tuple(_read_u32(fh, "dims of %s" % name) for _ in range(rank))
        n_items = 1
        for dim in shape:
            n_items *= dim
        raw = _read_exact(fh, 8 * n_items, "data of %s" % name)
        arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    trailing = fh.read(1)
    if trailing:
        raise CheckpointError("trailing bytes after last array")
    return meta, arrays


def save_checkpoint(model, path, task=None, task_info=None, optimizer=None,
                    train_state=None):
    """Persist a model (and optionally optimizer/training state) to disk."""
    meta = {"kind": "ntm-model", "model": model.config()}
    if task is not None:
        meta["task"] = task
    if task_info:
        meta["task_info"] = task_info
    arrays = {name: p.data for name, p in model.params.items()}
    if optimizer is not None:
        meta["optimizer"] = {
            "name": type(optimizer).__name__,
            "learning_rate": optimizer.learning_rate,
        }
        for extra in ("decay", "epsilon", "momentum"):
            if hasattr(optimizer, extra):
                meta["optimizer"][extra] = getattr(optimizer, extra)
        for name, arr in optimizer.state_arrays().items():
            arrays["opt." + name] = arr
    if train_state:
        meta["train_state"] = train_state
    with open(path, "wb") as fh:
        write_arrays(fh, meta, arrays)


def load_checkpoint(path):
    """Load a model checkpoint; returns (model, meta, optimizer arrays).

    Every parameter named by the model configuration must be present with
    the right shape; errors name the offending field.
    """
    with open(path, "rb") as fh:
        meta, arrays = read_arrays(fh)
    if meta.get("kind") != "ntm-model":
        raise CheckpointError("unexpected checkpoint kind %r" % (meta.get("kind"),))
    try:
        cfg = meta["model"]
        model = NtmModel(cfg["input_ch"], cfg["output_ch"], cfg["locations"],
                         cfg["width"], cfg["hidden"])
    except KeyError as exc:
        raise CheckpointError("metadata missing model field %s" % exc) from exc
    opt_arrays = {}
    for name, arr in arrays.items():
        if name.startswith("opt."):
            opt_arrays[name[len("opt."):]] = arr
            continue
        if name not in model.params:
            raise CheckpointError("unknown parameter %r in checkpoint" % name)
        expected = model.params[name].data.shape
        if arr.shape != expected:
            raise CheckpointError(
                "parameter %r has shape %r, expected %r" % (name, arr.shape, expected)
            )
        model.params[name].data = arr
    missing = [name for name in model.params if name not in arrays]
    if missing:
        raise CheckpointError("checkpoint is missing parameter %r" % missing[0])
    return model, meta, opt_arrays
