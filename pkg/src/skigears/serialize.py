"""Flat binary weight container.

Layout: the magic string "GSTK1", then one record per named parameter:

    name length   u32 little-endian
    name          UTF-8 bytes
    rank          u32 little-endian
    dims          u32 little-endian, one per axis
    payload       float64 little-endian, row-major

Model files carry one leading metadata record named "__config__" whose
payload is raw UTF-8 key=value lines (one per line); for such dunder
records the single dim counts bytes instead of doubles.
"""

import struct

import numpy as np

MAGIC = b"GSTK1"
META_NAME = "__config__"


class ContainerError(ValueError):
    """Malformed or truncated weight container."""


def _write_record(fh, name, payload, dims):
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<I", len(dims)))
    for d in dims:
        fh.write(struct.pack("<I", d))
    fh.write(payload)


def write_container(path, arrays, meta=None):
    """Write named float64 arrays (an iterable of (name, array) pairs in the
    order given) with an optional leading metadata dict."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        if meta is not None:
            lines = "".join(f"{k}={v}\n" for k, v in meta.items())
            payload = lines.encode("utf-8")
            _write_record(fh, META_NAME, payload, (len(payload),))
        for name, arr in arrays:
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            _write_record(fh, name, arr.astype("<f8").tobytes(order="C"), arr.shape)


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise ContainerError(f"truncated container while reading {what}")
    return buf


def read_container(path):
    """Read a container back; returns (meta dict or None, {name: array})."""
    meta = None
    arrays = {}
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ContainerError(f"{path} is not a GSTK1 container")
        while True:
            head = fh.read(4)
            if not head:
                break
            if len(head) != 4:
                raise ContainerError("truncated container while reading name length")
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "dims"))
            if name.startswith("__"):
                payload = _read_exact(fh, dims[0], "metadata payload")
                if name == META_NAME:
                    meta = {}
                    for line in payload.decode("utf-8").splitlines():
                        if line:
                            k, _, v = line.partition("=")
                            meta[k] = v
                continue
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            payload = _read_exact(fh, 8 * count, f"payload of {name}")
            arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    return meta, arrays
