"""Checkpoint files: a text manifest followed by little-endian float32 arrays.

Layout::

    MUSECOGNET-CHECKPOINT 1
    config.kernel_lengths = 16,32,64,128
    ...
    tensor bn.gamma shape=32 offset=20480 nbytes=128
    ...
    END
    <raw bytes>

Offsets count from the first byte after the ``END`` line.
"""

from __future__ import annotations

import dataclasses
import io
from pathlib import Path

import numpy as np

from .model import ModelConfig, check_params, param_shapes

MAGIC = "MUSECOGNET-CHECKPOINT 1"
_DTYPE = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(i) for i in v)
    return repr(v) if isinstance(v, float) else str(v)


def _parse_config(fields: dict[str, str]) -> ModelConfig:
    kwargs = {}
    for f in dataclasses.fields(ModelConfig):
        if f.name not in fields:
            raise CheckpointError(f"manifest is missing config.{f.name}")
        raw = fields[f.name]
        default = f.default
        if isinstance(default, tuple):
            kwargs[f.name] = tuple(int(p) for p in raw.split(","))
        elif isinstance(default, float):
            kwargs[f.name] = float(raw)
        elif isinstance(default, int):
            kwargs[f.name] = int(raw)
        else:
            kwargs[f.name] = raw
    return ModelConfig(**kwargs)


def dumps(params: dict[str, np.ndarray], config: ModelConfig) -> bytes:
    check_params(params, config)
    lines = [MAGIC]
    for f in dataclasses.fields(config):
        lines.append(f"config.{f.name} = {_format_value(getattr(config, f.name))}")
    blobs = []
    offset = 0
    for name, shape in param_shapes(config).items():
        blob = np.ascontiguousarray(params[name], dtype=_DTYPE).tobytes()
        lines.append(
            f"tensor {name} shape={','.join(map(str, shape))} offset={offset} nbytes={len(blob)}"
        )
        blobs.append(blob)
        offset += len(blob)
    lines.append("END")
    return ("\n".join(lines) + "\n").encode("ascii") + b"".join(blobs)


def loads(data: bytes) -> tuple[dict[str, np.ndarray], ModelConfig]:
    stream = io.BytesIO(data)
    if stream.readline().decode("ascii").rstrip("\n") != MAGIC:
        raise CheckpointError("not a MuseCogNet checkpoint")
    fields: dict[str, str] = {}
    tensors: list[tuple[str, tuple[int, ...], int, int]] = []
    while True:
        raw = stream.readline()
        if not raw:
            raise CheckpointError("manifest not terminated by END")
        line = raw.decode("ascii").rstrip("\n")
        if line == "END":
            break
        if line.startswith("config."):
            key, _, value = line[len("config."):].partition(" = ")
            fields[key] = value
        elif line.startswith("tensor "):
            _, name, *attrs = line.split(" ")
            kv = dict(a.split("=", 1) for a in attrs)
            shape = tuple(int(s) for s in kv["shape"].split(",") if s)
            tensors.append((name, shape, int(kv["offset"]), int(kv["nbytes"])))
        else:
            raise CheckpointError(f"unrecognised manifest line: {line!r}")
    config = _parse_config(fields)
    body = stream.read()
    params = {}
    for name, shape, offset, nbytes in tensors:
        if offset + nbytes > len(body):
            raise CheckpointError(f"tensor {name} extends past end of file")
        arr = np.frombuffer(body, dtype=_DTYPE, count=nbytes // _DTYPE.itemsize, offset=offset)
        params[name] = arr.reshape(shape).astype(np.float64)
    check_params(params, config)
    return params, config


def save(path: str | Path, params: dict[str, np.ndarray], config: ModelConfig) -> None:
    Path(path).write_bytes(dumps(params, config))


def load(path: str | Path) -> tuple[dict[str, np.ndarray], ModelConfig]:
    return loads(Path(path).read_bytes())
