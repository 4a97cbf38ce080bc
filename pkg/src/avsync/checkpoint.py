"""Byte-exact checkpoint serialization.

Layout (all integers little-endian):
    magic "UCKP" | u32 version | 32-byte config hash | u32 epoch |
    u64 optimizer step | u32 rng-json length | rng json bytes |
    u32 record count | records... | u32 record count | records...

The first record group holds model arrays (parameters and batchnorm running
stats), the second the optimizer moment buffers. Each record is
    u32 name length | name bytes | u32 ndim | u32 x ndim dims | f32 payload

A sidecar `<path>.config.json` stores the full run config so eval/resume can
rebuild the model; its hash must match the 32-byte digest in the header.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (BadMagicError, BadVersionError, PayloadLengthError,
                     TruncatedFileError)

CKPT_MAGIC = b"UCKP"
CKPT_VERSION = 1


def config_hash(config_dict) -> bytes:
    """sha256 of the canonical JSON form of a config dict."""
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).digest()


@dataclass
class Checkpoint:
    config: dict | None
    config_digest: bytes
    epoch: int
    adam_step: int
    rng_state: dict
    model_arrays: dict = field(default_factory=dict)
    adam_arrays: dict = field(default_factory=dict)
    version: int = CKPT_VERSION


def _pack_records(arrays):
    parts = [struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode()
        parts.append(struct.pack("<I", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n, what):
        if self.pos + n > len(self.blob):
            raise TruncatedFileError(f"{self.path}: truncated while reading {what}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what):
        return struct.unpack("<Q", self.take(8, what))[0]


def _read_records(r, group):
    count = r.u32(f"{group} record count")
    out = {}
    for i in range(count):
        nlen = r.u32(f"{group} name length")
        name = r.take(nlen, f"{group} name").decode()
        ndim = r.u32(f"{name} ndim")
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim, f"{name} dims"))
        n = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        payload = r.take(4 * n, f"{name} payload")
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return out


def save_checkpoint(path, ckpt: Checkpoint):
    """Write the checkpoint binary and its config sidecar atomically."""
    rng_blob = json.dumps(ckpt.rng_state, sort_keys=True,
                          separators=(",", ":")).encode()
    parts = [
        CKPT_MAGIC,
        struct.pack("<I", ckpt.version),
        ckpt.config_digest,
        struct.pack("<I", ckpt.epoch),
        struct.pack("<Q", ckpt.adam_step),
        struct.pack("<I", len(rng_blob)),
        rng_blob,
        _pack_records(ckpt.model_arrays),
        _pack_records(ckpt.adam_arrays),
    ]
    blob = b"".join(parts)
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)
    if ckpt.config is not None:
        side = json.dumps(ckpt.config, indent=2, sort_keys=True).encode() + b"\n"
        stmp = path + ".config.json.tmp"
        with open(stmp, "wb") as fh:
            fh.write(side)
        os.replace(stmp, path + ".config.json")
    return path


def load_checkpoint(path, expect_config=None):
    """Read a checkpoint; verifies header magic/version and payload length.

    If a config sidecar exists it is loaded and checked against the header
    digest. `expect_config` (a dict) triggers a warning when its hash does
    not match the stored digest.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise TruncatedFileError(f"{path}: file shorter than magic")
    if blob[:4] != CKPT_MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}")
    r = _Reader(blob, path)
    r.pos = 4
    version = r.u32("version")
    if version != CKPT_VERSION:
        raise BadVersionError(f"{path}: unsupported checkpoint version {version}")
    digest = r.take(32, "config hash")
    epoch = r.u32("epoch")
    adam_step = r.u64("optimizer step")
    rng_len = r.u32("rng state length")
    rng_state = json.loads(r.take(rng_len, "rng state").decode())
    model_arrays = _read_records(r, "model")
    adam_arrays = _read_records(r, "optimizer")
    if r.pos != len(blob):
        raise PayloadLengthError(f"{path}: {len(blob) - r.pos} trailing bytes "
                                 "after the last record")

    config = None
    side = os.fspath(path) + ".config.json"
    if os.path.exists(side):
        with open(side, "rb") as fh:
            config = json.loads(fh.read().decode())
        if config_hash(config) != digest:
            warnings.warn(f"{side} does not match the checkpoint config hash",
                          stacklevel=2)
    if expect_config is not None and config_hash(expect_config) != digest:
        warnings.warn("provided config does not match the checkpoint config hash",
                      stacklevel=2)
    return Checkpoint(config=config, config_digest=digest, epoch=epoch,
                      adam_step=adam_step, rng_state=rng_state,
                      model_arrays=model_arrays, adam_arrays=adam_arrays,
                      version=version)
