"""Single-file binary checkpoints.

Layout (little-endian)::

    magic  b"HAMURCKP"
    u32    format version
    32B    sha256 of (model config, dataset spec)
    u64    header length, then UTF-8 JSON header {"config": ..., "spec": ...}
    u32    record count
    per record: u32 name length, name, u32 ndim, ndim x u64 dims, float64 payload
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import DatasetSpec
from .model import HamurModel

MAGIC = b"HAMURCKP"
VERSION = 1


class CheckpointError(Exception):
    pass


def model_hash(cfg: ExperimentConfig, spec: DatasetSpec) -> bytes:
    spec_text = json.dumps(spec.to_dict(), sort_keys=True)
    return hashlib.sha256(cfg.hash() + spec_text.encode()).digest()


def _tensors(model: HamurModel) -> dict[str, np.ndarray]:
    out = {k: p.data for k, p in model.parameters().items()}
    out.update(model.buffers())
    return out


def save_checkpoint(model: HamurModel, cfg: ExperimentConfig, path) -> None:
    # output dir left out so identical runs in different directories write identical bytes
    record = cfg.replace(output={"dir": ""})
    header = json.dumps({"config": record.to_text(), "spec": model.spec.to_dict()}, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", VERSION), model_hash(cfg, model.spec),
             struct.pack("<Q", len(header)), header]
    tensors = _tensors(model)
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        nb = name.encode()
        parts.append(struct.pack("<I", len(nb)) + nb + struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated at byte {self.pos} (wanted {n} more)")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, cfg: ExperimentConfig | None = None) -> tuple[HamurModel, ExperimentConfig]:
    """Rebuild the model stored at ``path``; refuses if ``cfg`` describes a different model."""
    try:
        r = _Reader(Path(path).read_bytes(), path)
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint not found: {path}") from e
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, this build reads version {VERSION}")
    stored_hash = r.take(32)
    (hlen,) = r.unpack("<Q")
    try:
        header = json.loads(r.take(hlen).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header") from e
    saved_cfg = ExperimentConfig.from_text(header["config"])
    spec = DatasetSpec.from_dict(header["spec"])
    if model_hash(saved_cfg, spec) != stored_hash:
        raise CheckpointError(f"{path}: header does not match its config hash")
    if cfg is not None and model_hash(cfg, spec) != stored_hash:
        raise CheckpointError(f"{path}: config hash mismatch; checkpoint was written for a different model config")

    model = HamurModel(spec, saved_cfg.model)
    targets = _tensors(model)
    (count,) = r.unpack("<I")
    seen = set()
    for _ in range(count):
        (nlen,) = r.unpack("<I")
        name = r.take(nlen).decode()
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(shape)
        if name not in targets or targets[name].shape != arr.shape:
            raise CheckpointError(f"{path}: unexpected tensor {name!r} with shape {arr.shape}")
        targets[name][...] = arr
        seen.add(name)
    if seen != set(targets):
        raise CheckpointError(f"{path}: missing tensors {sorted(set(targets) - seen)[:5]}")
    if r.pos != len(r.buf):
        raise CheckpointError(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    return model, saved_cfg
