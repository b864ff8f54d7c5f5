"""Binary training checkpoints.

Layout (little-endian): magic ``MAXQCKPT``, version u16, section count u32,
then length-prefixed sections, each a 4-byte tag + u64 payload length.
Sections: CFG (config JSON), CTR (epoch + iteration), LYR (layer states with
f64 weights, biases, and momentum buffers), MET (metrics CSV text).

Reloading a checkpoint and resuming reproduces the bit-identical remainder
of the run for the same seed: epoch shuffles are derived from (seed, epoch)
and masks are recomputed from the stored weights.
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .config import RunConfig
from .training import Velocity

MAGIC = b"MAXQCKPT"
VERSION = 1
_KIND_CODES = {"conv": 0, "linear": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


@dataclass(eq=False)
class Checkpoint:
    config: RunConfig
    epoch: int  # number of completed epochs
    iteration: int
    model: nn.Model
    velocity: Velocity
    metrics_csv: str


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _array_bytes(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape) + a.tobytes()


def _read_array(blob: bytes, off: int) -> tuple[np.ndarray, int]:
    (ndim,) = struct.unpack_from("<B", blob, off)
    off += 1
    shape = struct.unpack_from(f"<{ndim}Q", blob, off)
    off += 8 * ndim
    count = int(np.prod(shape)) if ndim else 1
    arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape).copy()
    return arr, off + 8 * count


def _layer_section(model: nn.Model, velocity: Velocity) -> bytes:
    out = bytearray(struct.pack("<I", len(model.layers)))
    for i, layer in enumerate(model.layers):
        name = layer.name.encode()
        out += struct.pack("<H", len(name)) + name
        out += struct.pack(
            "<BBHH", _KIND_CODES[layer.kind], int(layer.eligible), layer.stride, layer.padding
        )
        out += _array_bytes(layer.weight)
        out += _array_bytes(layer.bias)
        out += _array_bytes(velocity.w[i])
        out += _array_bytes(velocity.b[i])
    return bytes(out)


def _parse_layers(blob: bytes) -> tuple[nn.Model, Velocity]:
    (count,) = struct.unpack_from("<I", blob, 0)
    off = 4
    layers, vel_w, vel_b = [], [], []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + name_len].decode()
        off += name_len
        kind_code, eligible, stride, padding = struct.unpack_from("<BBHH", blob, off)
        off += 6
        weight, off = _read_array(blob, off)
        bias, off = _read_array(blob, off)
        vw, off = _read_array(blob, off)
        vb, off = _read_array(blob, off)
        layers.append(
            nn.Layer(
                kind=_KIND_NAMES[kind_code],
                name=name,
                weight=weight,
                bias=bias,
                stride=stride,
                padding=padding,
                eligible=bool(eligible),
            )
        )
        vel_w.append(vw)
        vel_b.append(vb)
    return nn.Model(layers), Velocity(vel_w, vel_b)


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    sections = [
        (b"CFG\x00", ckpt.config.to_json().encode()),
        (b"CTR\x00", struct.pack("<QQ", ckpt.epoch, ckpt.iteration)),
        (b"LYR\x00", _layer_section(ckpt.model, ckpt.velocity)),
        (b"MET\x00", ckpt.metrics_csv.encode()),
    ]
    out = bytearray(MAGIC + struct.pack("<HI", VERSION, len(sections)))
    for tag, payload in sections:
        out += tag + struct.pack("<Q", len(payload)) + payload
    return bytes(out)


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    atomic_write_bytes(path, checkpoint_bytes(ckpt))


def load_checkpoint(path: str | Path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<HI", blob, len(MAGIC))
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = len(MAGIC) + 6
    sections: dict[bytes, bytes] = {}
    for _ in range(count):
        tag = blob[off : off + 4]
        (length,) = struct.unpack_from("<Q", blob, off + 4)
        off += 12
        sections[tag] = blob[off : off + length]
        off += length
    config = RunConfig.from_json(sections[b"CFG\x00"].decode())
    epoch, iteration = struct.unpack_from("<QQ", sections[b"CTR\x00"], 0)
    model, velocity = _parse_layers(sections[b"LYR\x00"])
    return Checkpoint(
        config=config,
        epoch=int(epoch),
        iteration=int(iteration),
        model=model,
        velocity=velocity,
        metrics_csv=sections[b"MET\x00"].decode(),
    )
