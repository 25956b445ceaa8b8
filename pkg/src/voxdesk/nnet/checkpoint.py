"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"ASYA1"                       magic
    u16 format version
    u32 metadata length, metadata  UTF-8 JSON: name, rng_seed, input_shape, frozen
    u32 layer count, then per layer: u32 length + UTF-8 JSON {"kind", "config"}
    u32 tensor count, then per tensor:
        u32 name length, name, u32 ndim, u32 * ndim dims, float32 LE data
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, VersionError
from .layers import layer_from_config
from .model import Model

MAGIC = b"ASYA1"
FORMAT_VERSION = 1


def _put_blob(buf, blob: bytes):
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)


def _get(buf, fmt):
    size = struct.calcsize(fmt)
    raw = buf.read(size)
    if len(raw) != size:
        raise FormatError("truncated checkpoint")
    return struct.unpack(fmt, raw)


def _get_blob(buf) -> bytes:
    (n,) = _get(buf, "<I")
    raw = buf.read(n)
    if len(raw) != n:
        raise FormatError("truncated checkpoint")
    return raw


def dumps(model: Model) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", FORMAT_VERSION))
    meta = {
        "name": model.name,
        "rng_seed": model.rng_seed,
        "input_shape": list(model.input_shape),
        "frozen": sorted(model.frozen),
    }
    _put_blob(buf, json.dumps(meta, sort_keys=True).encode())
    buf.write(struct.pack("<I", len(model.layers)))
    for layer in model.layers:
        _put_blob(buf, json.dumps({"kind": layer.kind, "config": layer.config()}, sort_keys=True).encode())
    buf.write(struct.pack("<I", len(model.params)))
    for name, value in model.params.items():
        _put_blob(buf, name.encode())
        buf.write(struct.pack("<I", value.ndim))
        buf.write(struct.pack(f"<{value.ndim}I", *value.shape))
        buf.write(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return buf.getvalue()


def loads(data: bytes) -> Model:
    buf = io.BytesIO(data)
    if buf.read(len(MAGIC)) != MAGIC:
        raise FormatError("not an ASYA1 checkpoint (bad magic)", field="magic")
    (version,) = _get(buf, "<H")
    if version != FORMAT_VERSION:
        raise VersionError(
            f"checkpoint format version {version}, this build reads {FORMAT_VERSION}", field="version"
        )
    meta = json.loads(_get_blob(buf))
    (n_layers,) = _get(buf, "<I")
    layers = []
    for _ in range(n_layers):
        desc = json.loads(_get_blob(buf))
        try:
            layers.append(layer_from_config(desc["kind"], desc["config"]))
        except KeyError as exc:
            raise FormatError(f"unknown layer kind {desc.get('kind')!r}", field="layers") from exc
    model = Model(layers, meta["input_shape"], rng_seed=meta["rng_seed"], dtype=np.float32, name=meta["name"])
    (n_tensors,) = _get(buf, "<I")
    loaded = {}
    for _ in range(n_tensors):
        name = _get_blob(buf).decode()
        (ndim,) = _get(buf, "<I")
        shape = _get(buf, f"<{ndim}I") if ndim else ()
        count = int(np.prod(shape)) if ndim else 1
        raw = buf.read(4 * count)
        if len(raw) != 4 * count:
            raise FormatError("truncated checkpoint")
        loaded[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)
    if loaded.keys() != model.params.keys():
        raise FormatError("checkpoint tensors do not match layer table", field="tensors")
    for name, value in loaded.items():
        if value.shape != model.params[name].shape:
            raise FormatError(f"tensor {name} has shape {value.shape}, expected {model.params[name].shape}")
    model.params = loaded
    model.frozen = set(meta["frozen"])
    return model


def save(model: Model, path) -> None:
    Path(path).write_bytes(dumps(model))


def load(path) -> Model:
    return loads(Path(path).read_bytes())
