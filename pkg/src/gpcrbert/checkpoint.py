"""``GBRT`` binary tensor container.

Layout (all integers little-endian)::

    b"GBRT" | u32 version | u64 header length | UTF-8 header | payload

Header lines are either metadata (``@key value``) or tensor entries
``name dtype shape0,shape1,... byte_offset``, where the offset is relative
to the start of the payload.  The payload is float32, row-major, tensors
back to back in header order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import Model, ModelConfig
from .tensorcore import Tensor
from .tokenizer import vocab_hash

MAGIC = b"GBRT"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


class CheckpointError(Exception):
    code = 10


class BadMagic(CheckpointError):
    code = 11


class UnsupportedVersion(CheckpointError):
    code = 12


class TruncatedPayload(CheckpointError):
    code = 13


class OverlappingOffsets(CheckpointError):
    code = 14


class MalformedHeader(CheckpointError):
    code = 15


class VocabMismatch(CheckpointError):
    code = 16


@dataclass
class Checkpoint:
    kind: str
    config: dict
    tensors: dict[str, np.ndarray]
    vocab: str = field(default_factory=vocab_hash)


def to_bytes(ckpt: Checkpoint) -> bytes:
    lines = [
        f"@kind {ckpt.kind}",
        "@config " + json.dumps(ckpt.config, sort_keys=True, separators=(",", ":")),
        f"@vocab {ckpt.vocab}",
    ]
    chunks = []
    offset = 0
    for name, arr in ckpt.tensors.items():
        if not name or name.startswith("@") or any(ch.isspace() for ch in name):
            raise ValueError(f"illegal tensor name {name!r}")
        data = np.array(arr, dtype="<f4", order="C")
        if not np.isfinite(data).all():
            raise ValueError(f"tensor {name} has non-finite values")
        shape = ",".join(str(s) for s in data.shape)
        lines.append(f"{name} f32 {shape} {offset}")
        raw = data.tobytes()
        chunks.append(raw)
        offset += len(raw)
    header = ("\n".join(lines) + "\n").encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + b"".join(chunks)


def from_bytes(buf: bytes) -> Checkpoint:
    if len(buf) < _PREFIX.size or buf[:4] != MAGIC:
        raise BadMagic("bad magic: not a GBRT container")
    _, version, header_len = _PREFIX.unpack_from(buf)
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported container version {version}")
    start = _PREFIX.size + header_len
    if start > len(buf):
        raise TruncatedPayload("truncated header")
    try:
        text = buf[_PREFIX.size : start].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedHeader(f"header is not UTF-8: {exc}") from None
    payload = memoryview(buf)[start:]
    meta: dict[str, str] = {}
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line:
            continue
        if line.startswith("@"):
            key, _, value = line[1:].partition(" ")
            meta[key] = value
            continue
        parts = line.split(" ")
        if len(parts) != 4 or parts[1] != "f32":
            raise MalformedHeader(f"header line {lineno}: expected 'name f32 shape offset'")
        name, _, shape_s, off_s = parts
        try:
            shape = tuple(int(s) for s in shape_s.split(",")) if shape_s else ()
            offset = int(off_s)
        except ValueError:
            raise MalformedHeader(f"header line {lineno}: bad shape or offset") from None
        entries.append((name, shape, offset))
    tensors = {}
    end = 0
    for name, shape, offset in entries:
        if offset < end:
            raise OverlappingOffsets(f"tensor {name} at offset {offset} overlaps the previous tensor (ends at {end})")
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(payload):
            raise TruncatedPayload(f"truncated payload: {name} needs bytes [{offset}, {offset + nbytes}), have {len(payload)}")
        tensors[name] = np.frombuffer(payload[offset : offset + nbytes], dtype="<f4").reshape(shape).astype(np.float32)
        end = offset + nbytes
    if end != len(payload):
        raise MalformedHeader(f"payload has {len(payload) - end} unaccounted trailing bytes")
    try:
        config = json.loads(meta.get("config", "{}"))
    except json.JSONDecodeError as exc:
        raise MalformedHeader(f"config is not valid JSON: {exc}") from None
    return Checkpoint(meta.get("kind", "model"), config, tensors, meta.get("vocab", ""))


def write_checkpoint(params: dict, config, path, kind: str = "model") -> None:
    tensors = {k: (v.data if isinstance(v, Tensor) else np.asarray(v)) for k, v in params.items()}
    cfg = config.to_dict() if hasattr(config, "to_dict") else dict(config)
    Path(path).write_bytes(to_bytes(Checkpoint(kind, cfg, tensors)))


def read_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())


def save_model(model: Model, path) -> None:
    write_checkpoint(model.params, model.config, path, kind="model")


def load_model(path) -> Model:
    ckpt = read_checkpoint(path)
    if ckpt.kind != "model":
        raise CheckpointError(f"{path}: holds a {ckpt.kind!r} container, not a model")
    if ckpt.vocab != vocab_hash():
        raise VocabMismatch(f"{path}: vocabulary hash differs from this build's vocabulary")
    config = ModelConfig.from_dict(ckpt.config)
    params = {k: Tensor(v, requires_grad=True, name=k) for k, v in ckpt.tensors.items()}
    model = Model(config, params)
    model.check()
    return model
