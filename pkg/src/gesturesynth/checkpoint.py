"""Binary checkpoint container for model parameters.

Byte layout (all integers little-endian):

    offset  size  field
    0       8     magic ``b"GSGCKPT1"``
    8       4     format version (uint32, currently 1)
    12      4     config JSON length L (uint32)
    16      L     config JSON, UTF-8: {"generator": {...},
                  "discriminator": {...}, "init_seed": int}
    16+L    4     parameter count N (uint32)
    then, per parameter, in stored order:
            2     name length (uint16), followed by the UTF-8 name
            1     ndim (uint8), followed by ndim uint32 extents
            8*n   float64 values, C order

Writes are atomic (temp file + rename in the target directory).
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import CheckpointFormatError
from .networks import DiscriminatorConfig, GeneratorConfig, ModelParams

MAGIC = b"GSGCKPT1"
FORMAT_VERSION = 1


def save_checkpoint(params: ModelParams, path) -> None:
    path = Path(path)
    config_blob = json.dumps(
        {
            "generator": params.gen_config.to_dict(),
            "discriminator": params.disc_config.to_dict(),
            "init_seed": params.init_seed,
        },
        sort_keys=True,
    ).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    chunks.append(struct.pack("<I", len(config_blob)))
    chunks.append(config_blob)
    chunks.append(struct.pack("<I", len(params.names)))
    for name in params.names:
        values = params.tensors[name].values
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(np.ascontiguousarray(values, dtype="<f8").tobytes())
    blob = b"".join(chunks)

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.offset = 0
        self.path = path

    def read(self, n: int) -> bytes:
        if self.offset + n > len(self.blob):
            raise CheckpointFormatError(f"{self.path}: truncated checkpoint")
        out = self.blob[self.offset : self.offset + n]
        self.offset += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))


def load_checkpoint(path) -> ModelParams:
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    if reader.read(len(MAGIC)) != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic string, not a checkpoint")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{path}: unsupported format version {version}, expected {FORMAT_VERSION}"
        )
    (config_len,) = reader.unpack("<I")
    try:
        config = json.loads(reader.read(config_len).decode("utf-8"))
        gen_config = GeneratorConfig.from_dict(config["generator"])
        disc_config = DiscriminatorConfig.from_dict(config["discriminator"])
        init_seed = int(config["init_seed"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"{path}: bad config blob: {exc}") from exc
    (n_params,) = reader.unpack("<I")
    tensors = {}
    for _ in range(n_params):
        (name_len,) = reader.unpack("<H")
        name = reader.read(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        count = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(reader.read(8 * count), dtype="<f8").reshape(shape)
        tensors[name] = Tensor(values.copy(), requires_grad=True)
    if reader.offset != len(reader.blob):
        raise CheckpointFormatError(f"{path}: trailing bytes after parameters")
    return ModelParams(tensors, gen_config, disc_config, init_seed)
