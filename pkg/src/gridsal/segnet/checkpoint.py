"""Portable binary checkpoint format.

Layout (all integers little-endian):
    magic "GSAL" | u32 version=1 | u32 tensor_count
    per tensor:  u32 name_len | UTF-8 name | u32 rank | u32 dims... | f32 payload

Model hyperparameters ride along as reserved scalar tensors named
"meta.*" so a checkpoint is self-describing; the init seed is recorded
there too.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from gridsal.segnet.model import UNetLite

MAGIC = b"GSAL"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _write_tensor(fh, name: str, arr: np.ndarray) -> None:
    nb = name.encode("utf-8")
    fh.write(struct.pack("<I", len(nb)))
    fh.write(nb)
    fh.write(struct.pack("<I", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<I", d))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save_checkpoint(model: UNetLite, path) -> None:
    tensors: list[tuple[str, np.ndarray]] = [
        ("meta.width", np.array(model.width, np.float32)),
        ("meta.growth", np.array(model.growth, np.float32)),
        ("meta.in_channels", np.array(model.in_channels, np.float32)),
        ("meta.n_classes", np.array(model.n_classes, np.float32)),
        ("meta.seed", np.array(model.seed, np.float32)),
    ]
    tensors += [(name, p.data) for name, p in model.params.items()]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors:
            _write_tensor(fh, name, arr)


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint file")
    return buf


def read_tensors(path) -> dict[str, np.ndarray]:
    """Parse a checkpoint into {name: float32 array}, validating the header."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise CheckpointError("bad checkpoint magic")
        version, count = struct.unpack("<II", _read_exact(fh, 8))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
            name = _read_exact(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank)) if rank else ()
            n_items = int(np.prod(dims)) if rank else 1
            payload = _read_exact(fh, 4 * n_items)
            arr = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
            if name in out:
                raise CheckpointError(f"duplicate tensor name {name!r}")
            out[name] = arr
        if fh.read(1):
            raise CheckpointError("trailing bytes after last tensor")
    return out


def load_checkpoint(path) -> UNetLite:
    tensors = read_tensors(path)
    try:
        model = UNetLite(
            width=int(tensors.pop("meta.width")),
            growth=float(tensors.pop("meta.growth")),
            in_channels=int(tensors.pop("meta.in_channels")),
            n_classes=int(tensors.pop("meta.n_classes")),
            seed=int(tensors.pop("meta.seed")),
        )
    except KeyError as exc:
        raise CheckpointError(f"missing metadata tensor {exc}") from exc
    if set(tensors) != set(model.params):
        missing = set(model.params) - set(tensors)
        extra = set(tensors) - set(model.params)
        raise CheckpointError(f"parameter name mismatch (missing={missing}, extra={extra})")
    for name, arr in tensors.items():
        if arr.shape != model.params[name].data.shape:
            raise CheckpointError(f"shape mismatch for {name!r}")
        model.params[name].data = arr.copy()
    model.set_trainable(False)
    return model
