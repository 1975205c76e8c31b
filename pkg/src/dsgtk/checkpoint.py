"""Binary parameter checkpoints.

Layout: magic ``DSGW``, version u16, entry count u32, then per entry:
name length u32 + UTF-8 name, rows u32, cols u32, row-major f32 payload.
All integers little-endian. Optimizer moments are stored alongside in a
sibling ``<path>.opt`` file under the same layout, with entries named
``<param>.m`` / ``<param>.v`` plus a 1x1 ``__step__`` entry.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DSGError
from .nn import Adam, Parameter

MAGIC = b"DSGW"
VERSION = 1


def save_tensors(path, tensors: dict[str, np.ndarray]):
    """Write named matrices. Values are stored as float32."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(tensors)))
        for name, value in tensors.items():
            arr = np.ascontiguousarray(value, dtype=np.float32)
            if arr.ndim != 2:
                raise DSGError(f"checkpoint entry {name!r} is not a matrix")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            fh.write(arr.astype("<f4").tobytes())


def load_tensors(path) -> dict[str, np.ndarray]:
    """Read named matrices back as float64 (values round-trip via f32)."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise DSGError(f"{path}: not a checkpoint file (bad magic)")
    try:
        version, count = struct.unpack_from("<HI", data, 4)
        if version != VERSION:
            raise DSGError(f"{path}: unsupported checkpoint version {version}")
        offset = 10
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            name = data[offset : offset + name_len].decode("utf-8")
            offset += name_len
            rows, cols = struct.unpack_from("<II", data, offset)
            offset += 8
            nbytes = rows * cols * 4
            if offset + nbytes > len(data):
                raise DSGError(f"{path}: truncated payload for entry {name!r}")
            flat = np.frombuffer(data[offset : offset + nbytes], dtype="<f4")
            offset += nbytes
            out[name] = flat.reshape(rows, cols).astype(np.float64)
        if offset != len(data):
            raise DSGError(f"{path}: {len(data) - offset} trailing bytes")
        return out
    except struct.error as exc:
        raise DSGError(f"{path}: corrupt checkpoint ({exc})") from exc


def save_parameters(path, params: list[Parameter]):
    save_tensors(path, {p.name: p.value for p in params})


def load_parameters(path, params: list[Parameter]):
    """Fill an existing parameter set from a checkpoint, strictly."""
    stored = load_tensors(path)
    for p in params:
        if p.name not in stored:
            raise DSGError(f"{path}: missing parameter {p.name!r}")
        value = stored.pop(p.name)
        if value.shape != p.value.shape:
            raise DSGError(
                f"{path}: shape mismatch for {p.name!r}: "
                f"stored {value.shape}, expected {p.value.shape}"
            )
        p.value[:] = value
    if stored:
        raise DSGError(f"{path}: unexpected parameters {sorted(stored)}")


def save_optimizer(path, opt: Adam):
    entries: dict[str, np.ndarray] = {"__step__": np.array([[float(opt.t)]])}
    for name in sorted(opt.m):
        entries[f"{name}.m"] = opt.m[name]
        entries[f"{name}.v"] = opt.v[name]
    save_tensors(path, entries)


def load_optimizer(path, opt: Adam):
    stored = load_tensors(path)
    try:
        opt.t = int(stored.pop("__step__")[0, 0])
        for name in opt.m:
            opt.m[name][:] = stored.pop(f"{name}.m")
            opt.v[name][:] = stored.pop(f"{name}.v")
    except KeyError as exc:
        raise DSGError(f"{path}: missing optimizer entry {exc}") from exc
