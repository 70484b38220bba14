"""Binary checkpoint persistence with bit-exact round-trips.

Layout: magic string "TSLAB1", a length-prefixed JSON block holding the
model configuration (dims, context, vocabulary), a block count, then
one block per parameter: name length (u32), name bytes (UTF-8), element
count (u64), raw 64-bit little-endian floats in C order.  Shapes are
reconstructed from the configuration, so the element counts double as a
consistency check.
"""

import json
import struct

import numpy as np

from tslab import model as tmodel

MAGIC = b"TSLAB1"


def _config_to_dict(config):
    return {
        "vocab": list(config.vocab.labels),
        "input_dim": config.input_dim,
        "encoder_dim": config.encoder_dim,
        "encoder_window": config.encoder_window,
        "pred_dim": config.pred_dim,
        "joint_dim": config.joint_dim,
        "context_size": config.context_size,
        "pred_cell": config.pred_cell,
    }


def _config_from_dict(blob):
    return tmodel.ModelConfig(
        vocab=tmodel.Vocabulary(tuple(blob["vocab"])),
        input_dim=blob["input_dim"],
        encoder_dim=blob["encoder_dim"],
        encoder_window=blob["encoder_window"],
        pred_dim=blob["pred_dim"],
        joint_dim=blob["joint_dim"],
        context_size=blob["context_size"],
        pred_cell=blob["pred_cell"],
    )


def save_checkpoint(path, params):
    config_bytes = json.dumps(
        _config_to_dict(params.config), sort_keys=True
    ).encode("utf-8")
    names = [name for name, _ in tmodel.param_shapes(params.config)]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(config_bytes)))
        fh.write(config_bytes)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            arr = np.ascontiguousarray(params.arrays[name], dtype="<f8")
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<Q", arr.size))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint (bad magic)")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise ValueError(f"{path} is truncated")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    (config_len,) = struct.unpack("<I", take(4))
    config = _config_from_dict(json.loads(take(config_len).decode("utf-8")))
    shapes = tmodel.param_shapes(config)
    (count,) = struct.unpack("<I", take(4))
    if count != len(shapes):
        raise ValueError(
            f"{path} holds {count} parameter blocks, expected {len(shapes)}"
        )
    arrays = {}
    for expected_name, shape in shapes:
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        if name != expected_name:
            raise ValueError(
                f"{path} holds parameter {name!r} where {expected_name!r} "
                "was expected"
            )
        (size,) = struct.unpack("<Q", take(8))
        expected = int(np.prod(shape)) if shape else 1
        if size != expected:
            raise ValueError(
                f"parameter {name!r} holds {size} elements, expected {expected}"
            )
        arr = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64)
        arrays[name] = arr.reshape(shape)
    if pos != len(data):
        raise ValueError(f"{path} has {len(data) - pos} trailing bytes")
    return tmodel.TransducerParams(config=config, arrays=arrays)
