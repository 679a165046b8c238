"""VGGW portable weight-file codec.

Little-endian layout:

    magic "VGGW" (4 bytes)
    u32 version = 1
    u32 entry_count
    entry*: u32 name_len | UTF-8 name | u8 ndim | ndim x u32 dims | prod(dims) x f32 data

Kernel entries carry the layer name with layout [out, in, kh, kw]; bias
entries are named "<layer>.bias". Canonical entry order is network layer
order, kernel then bias, which makes save(load(f)) byte-identical to f.
"""

from __future__ import annotations

import struct

import numpy as np

from .image_io import atomic_write_bytes

MAGIC = b"VGGW"
VERSION = 1


class VggwError(ValueError):
    """Malformed VGGW file."""


class BadMagicError(VggwError):
    pass


class VersionError(VggwError):
    pass


class TruncatedFileError(VggwError):
    pass


def _pack_entry(name: str, data: np.ndarray) -> bytes:
    raw = name.encode("utf-8")
    arr = np.ascontiguousarray(data, dtype="<f4")
    if not 1 <= arr.ndim <= 4:
        raise VggwError(f"entry {name!r}: rank must be 1..4, got {arr.ndim}")
    parts = [struct.pack("<I", len(raw)), raw, struct.pack("<B", arr.ndim)]
    parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    parts.append(arr.tobytes())
    return b"".join(parts)


def serialize_weights(store) -> bytes:
    """Encode a weight store (layer -> (kernels, bias)) in store order."""
    entries = []
    for name, (kernels, bias) in store.items():
        entries.append(_pack_entry(name, kernels))
        entries.append(_pack_entry(f"{name}.bias", bias))
    return MAGIC + struct.pack("<II", VERSION, len(entries)) + b"".join(entries)


def save_weights(path, store):
    atomic_write_bytes(path, serialize_weights(store))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"file ends at byte {len(self.data)}, needed {self.pos + n}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]


def parse_weights(data: bytes):
    """Decode VGGW bytes into a weight store; raises the declared errors."""
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version = r.u32()
    if version != VERSION:
        raise VersionError(f"unsupported version {version}, expected {VERSION}")
    count = r.u32()
    tensors: dict = {}
    for _ in range(count):
        name_len = r.u32()
        name = r.take(name_len).decode("utf-8")
        ndim = r.u8()
        if not 1 <= ndim <= 4:
            raise VggwError(f"entry {name!r}: rank must be 1..4, got {ndim}")
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        if any(d < 1 for d in dims):
            raise VggwError(f"entry {name!r}: zero extent in {dims}")
        n = 1
        for d in dims:
            n *= d
        arr = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims)
        if name in tensors:
            raise VggwError(f"duplicate entry {name!r}")
        tensors[name] = np.ascontiguousarray(arr, dtype=np.float32)
    if r.pos != len(data):
        raise VggwError(f"{len(data) - r.pos} trailing bytes after last entry")

    store: dict = {}
    for name, arr in tensors.items():
        if name.endswith(".bias"):
            continue
        bias_name = f"{name}.bias"
        if bias_name not in tensors:
            raise VggwError(f"kernel entry {name!r} has no matching {bias_name!r}")
        store[name] = (arr, tensors[bias_name])
    orphans = {n for n in tensors if n.endswith(".bias") and n[: -len(".bias")] not in tensors}
    if orphans:
        raise VggwError(f"bias entries without kernels: {sorted(orphans)}")
    return store


def load_weights(path):
    with open(path, "rb") as fh:
        return parse_weights(fh.read())
