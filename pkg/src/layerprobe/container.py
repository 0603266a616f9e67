"""Single-file tensor container: JSON header + raw little-endian f32 blob.

Layout (bit-exact):
    bytes 0-7    magic "LPROBE01"
    bytes 8-11   little-endian u32 header length H
    bytes 12..12+H  UTF-8 JSON {"version", "metadata", "manifest"}
    remainder    densely packed little-endian IEEE-754 float32 tensor data

The reserved "golden.*" tensor namespace carries conformance vectors so a
single file can ship a model together with its test oracle.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"LPROBE01"
FORMAT_VERSION = 1


class ContainerError(Exception):
    """Raised for malformed or inconsistent container files."""


@dataclass(frozen=True)
class TensorManifestEntry:
    name: str
    dtype: str
    shape: tuple[int, ...]
    byte_offset: int
    byte_length: int


@dataclass
class ModelContainer:
    tensors: dict[str, np.ndarray]
    metadata: dict
    manifest: list[TensorManifestEntry] = field(default_factory=list)
    checksum: str = ""


def write_container(tensors: Mapping[str, np.ndarray], metadata: Mapping, path) -> None:
    """Serialize a named-tensor map plus metadata to ``path``.

    Tensors are converted to float32; NaN/Inf values are rejected. The
    resulting file round-trips byte-identically through read_container.
    """
    if not tensors:
        raise ValueError("empty container")
    arrays: dict[str, np.ndarray] = {}
    for name, t in tensors.items():
        arr = np.ascontiguousarray(np.asarray(t, dtype=np.float32))
        if arr.size == 0:
            raise ValueError(f"tensor {name!r} is empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"tensor {name!r} contains NaN/Inf")
        arrays[name] = arr

    manifest = []
    offset = 0
    for name, arr in arrays.items():
        length = 4 * arr.size
        manifest.append(
            {
                "name": name,
                "dtype": "f32",
                "shape": list(arr.shape),
                "byte_offset": offset,
                "byte_length": length,
            }
        )
        offset += length

    header = json.dumps(
        {"version": FORMAT_VERSION, "metadata": dict(metadata), "manifest": manifest},
        sort_keys=True,
    ).encode("utf-8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for arr in arrays.values():
            f.write(arr.astype("<f4", copy=False).tobytes())


def read_container(path) -> ModelContainer:
    """Read a container written by write_container.

    Returned tensors are bitwise equal to those written and are marked
    read-only; loading never mutates the file.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:8] != MAGIC:
        raise ContainerError("corrupt header: bad magic")
    (header_len,) = struct.unpack("<I", data[8:12])
    if 12 + header_len > len(data):
        raise ContainerError("corrupt header: header length exceeds file size")
    try:
        header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerError(f"corrupt header: {e}") from e

    if header.get("version") != FORMAT_VERSION:
        raise ContainerError(f"unknown format version {header.get('version')!r}")
    blob = data[12 + header_len :]

    manifest: list[TensorManifestEntry] = []
    tensors: dict[str, np.ndarray] = {}
    expect_offset = 0
    for raw in header["manifest"]:
        entry = TensorManifestEntry(
            name=raw["name"],
            dtype=raw["dtype"],
            shape=tuple(int(s) for s in raw["shape"]),
            byte_offset=int(raw["byte_offset"]),
            byte_length=int(raw["byte_length"]),
        )
        if entry.dtype != "f32":
            raise ContainerError(f"unsupported dtype {entry.dtype!r} for {entry.name!r}")
        if any(s <= 0 for s in entry.shape):
            raise ContainerError(f"non-positive shape for {entry.name!r}")
        if entry.byte_length != 4 * int(np.prod(entry.shape)):
            raise ContainerError(f"byte_length/shape mismatch for {entry.name!r}")
        if entry.byte_offset != expect_offset:
            raise ContainerError(f"manifest not densely packed at {entry.name!r}")
        if entry.byte_offset + entry.byte_length > len(blob):
            raise ContainerError(f"blob overrun at {entry.name!r}")
        if entry.name in tensors:
            raise ContainerError(f"duplicate tensor name {entry.name!r}")
        arr = np.frombuffer(
            blob, dtype="<f4", count=entry.byte_length // 4, offset=entry.byte_offset
        ).reshape(entry.shape)
        arr.flags.writeable = False
        tensors[entry.name] = arr
        manifest.append(entry)
        expect_offset += entry.byte_length
    if expect_offset != len(blob):
        raise ContainerError("blob overrun: trailing bytes not covered by manifest")

    checksum = hashlib.sha256(blob).hexdigest()
    return ModelContainer(
        tensors=tensors, metadata=header["metadata"], manifest=manifest, checksum=checksum
    )


def tensors_checksum(tensors: Mapping[str, np.ndarray]) -> str:
    """sha256 over tensor names and raw f32 bytes, order-independent of dict churn."""
    h = hashlib.sha256()
    for name in sorted(tensors):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(tensors[name], dtype="<f4").tobytes())
    return h.hexdigest()


def load_golden_vectors(path) -> tuple[np.ndarray, list[np.ndarray]]:
    """Load the reserved conformance vectors from a container.

    Returns (golden input samples, per-layer expected feature matrices).
    """
    container = read_container(path)
    if "golden.input" not in container.tensors:
        raise ContainerError("no golden vectors: missing golden.input")
    golden_input = container.tensors["golden.input"]
    if golden_input.ndim != 1:
        raise ContainerError("golden.input must be a 1-D sample vector")

    hidden_dim = int(container.metadata.get("hidden_dim", 0))
    layers = []
    l = 1
    while f"golden.layer.{l}" in container.tensors:
        layers.append(container.tensors[f"golden.layer.{l}"])
        l += 1
    if not layers:
        raise ContainerError("no golden vectors: missing golden.layer.1")
    frame_count = layers[0].shape[0]
    for i, mat in enumerate(layers, start=1):
        if mat.ndim != 2 or mat.shape != (frame_count, hidden_dim):
            raise ContainerError(
                f"shape mismatch: golden.layer.{i} has {mat.shape}, "
                f"expected ({frame_count}, {hidden_dim})"
            )
    return golden_input, layers
