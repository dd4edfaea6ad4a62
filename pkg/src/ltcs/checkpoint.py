"""Checkpoint container.

Layout::

    b"LTCSCKPT"                 8-byte magic
    u32 little-endian           manifest length in bytes
    manifest                    UTF-8 JSON, sorted keys
    tensor data                 raw little-endian floats, manifest order

The manifest carries the format version, both configs, the seed, the
training history, free-form metadata and a tensor index of
``{name, shape, offset, nbytes}`` entries (offsets relative to the start of
the tensor data).
"""
import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError
from .model import LtcsConfig, LtcsModel
from .nn import ParamStore
from .training import TrainConfig

MAGIC = b"LTCSCKPT"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    ltcs_config: LtcsConfig
    train_config: TrainConfig
    params: ParamStore
    history: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def seed(self):
        return self.ltcs_config.seed

    def model(self):
        return LtcsModel(self.ltcs_config, self.params)

    def to_bytes(self):
        dtype = np.dtype(self.params.dtype).newbyteorder("<")
        index, chunks, offset = [], [], 0
        for name, value in self.params.items():
            raw = np.ascontiguousarray(value, dtype=dtype).tobytes()
            index.append({"name": name, "shape": list(value.shape), "offset": offset,
                          "nbytes": len(raw)})
            chunks.append(raw)
            offset += len(raw)
        manifest = {
            "format_version": self.format_version,
            "dtype": np.dtype(self.params.dtype).name,
            "seed": self.seed,
            "ltcs_config": self.ltcs_config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "history": _plain(self.history),
            "meta": _plain(self.meta),
            "tensors": index,
        }
        text = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        return MAGIC + struct.pack("<I", len(text)) + text + b"".join(chunks)

    @classmethod
    def from_bytes(cls, blob):
        if len(blob) < 12 or blob[:8] != MAGIC:
            raise CheckpointError("not an LTCS checkpoint (bad magic or truncated header)")
        (mlen,) = struct.unpack("<I", blob[8:12])
        if len(blob) < 12 + mlen:
            raise CheckpointError("checkpoint truncated inside the manifest")
        try:
            manifest = json.loads(blob[12:12 + mlen].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint manifest: {exc}") from exc
        version = manifest.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"checkpoint format version {version} is not supported "
                                  f"(this build reads version {FORMAT_VERSION})")
        data = memoryview(blob)[12 + mlen:]
        dtype = np.dtype(manifest["dtype"]).newbyteorder("<")
        params = ParamStore(np.dtype(manifest["dtype"]))
        for entry in manifest["tensors"]:
            end = entry["offset"] + entry["nbytes"]
            if end > len(data):
                raise CheckpointError(f"checkpoint truncated in tensor {entry['name']!r}")
            arr = np.frombuffer(data[entry["offset"]:end], dtype=dtype)
            params.add(entry["name"], arr.reshape(entry["shape"]))
        total = sum(e["nbytes"] for e in manifest["tensors"])
        if len(data) != total:
            raise CheckpointError(f"checkpoint has {len(data) - total} trailing bytes")
        try:
            lc = LtcsConfig.from_dict(manifest["ltcs_config"])
            tc = TrainConfig.from_dict(manifest["train_config"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"checkpoint configs are invalid: {exc}") from exc
        ckpt = cls(ltcs_config=lc, train_config=tc, params=params,
                   history=manifest["history"], meta=manifest["meta"],
                   format_version=version)
        expected = set(LtcsModel(lc).params.names())
        if expected != set(params.names()):
            raise CheckpointError("checkpoint tensors do not match its architecture config")
        return ckpt

    def fingerprint(self):
        return hashlib.sha256(self.to_bytes()).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def save_checkpoint(checkpoint, path):
    with open(path, "wb") as fh:
        fh.write(checkpoint.to_bytes())


def load_checkpoint(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return Checkpoint.from_bytes(blob)
