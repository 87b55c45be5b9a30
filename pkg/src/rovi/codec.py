"""Little-endian base-128 varints with delta-coded sorted id lists."""

from __future__ import annotations

from typing import Iterable

import numpy as np


def encode_varint(value: int, out: bytearray) -> None:
    if value < 0:
        raise ValueError("varint values must be non-negative")
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def decode_varint(buf: bytes | memoryview, pos: int) -> tuple[int, int]:
    """Decode one varint at ``pos``; return (value, next position)."""
    value = shift = 0
    while True:
        byte = buf[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if byte < 0x80:
            return value, pos
        shift += 7


def encode_ids(ids: Iterable[int]) -> bytes:
    """Delta + varint encode a strictly increasing id list."""
    arr = np.asarray(list(ids) if not isinstance(ids, np.ndarray) else ids, dtype=np.uint64)
    if arr.size == 0:
        return b""
    deltas = np.diff(arr, prepend=np.uint64(0))
    if arr.size > 1 and not np.all(arr[1:] > arr[:-1]):
        raise ValueError("id list must be strictly increasing")
    return encode_array(deltas)


def _varint_bytes(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Varint-encode ``values``; return (byte array, bytes used per value)."""
    v = np.asarray(values, dtype=np.uint64)
    nbytes = np.ones(v.size, dtype=np.int64)
    if v.size == 0:
        return np.empty(0, dtype=np.uint8), nbytes
    rest = v >> np.uint64(7)
    while np.any(rest):
        nbytes += rest > 0
        rest >>= np.uint64(7)
    starts = np.cumsum(nbytes) - nbytes
    out = np.empty(int(nbytes.sum()), dtype=np.uint8)
    for k in range(int(nbytes.max())):
        mask = nbytes > k
        chunk = (v[mask] >> np.uint64(7 * k)) & np.uint64(0x7F)
        cont = (nbytes[mask] > k + 1).astype(np.uint64) << np.uint64(7)
        out[starts[mask] + k] = (chunk | cont).astype(np.uint8)
    return out, nbytes


def encode_array(values: np.ndarray) -> bytes:
    """Vectorised varint encoding of non-negative integers."""
    return _varint_bytes(values)[0].tobytes()


def encode_id_lists(ids: np.ndarray, counts: np.ndarray) -> tuple[bytes, np.ndarray]:
    """Encode many strictly increasing id lists laid end to end in ``ids``.

    ``counts`` gives the ids per list. Returns the concatenated encodings,
    each identical to :func:`encode_ids` of its list, and their byte lengths.
    """
    ids = np.asarray(ids, dtype=np.int64)
    counts = np.asarray(counts, dtype=np.int64)
    if ids.size != counts.sum():
        raise ValueError("counts do not add up to the id array")
    if ids.size and ids.min() < 0:
        raise ValueError("ids must be non-negative")
    bounds = np.cumsum(counts)
    starts = bounds - counts
    deltas = np.diff(ids, prepend=np.int64(0))
    first = np.zeros(ids.size, dtype=bool)
    first[starts[counts > 0]] = True
    if np.any(deltas[~first] <= 0):
        raise ValueError("id list must be strictly increasing")
    deltas[first] = ids[first]
    raw, nbytes = _varint_bytes(deltas)
    cum = np.concatenate(([0], np.cumsum(nbytes)))
    return raw.tobytes(), cum[bounds] - cum[starts]


def decode_array(buf: bytes | memoryview | np.ndarray) -> np.ndarray:
    """Inverse of :func:`encode_array`."""
    b = np.frombuffer(buf, dtype=np.uint8) if not isinstance(buf, np.ndarray) else buf
    if b.size == 0:
        return np.empty(0, dtype=np.int64)
    if b[-1] & 0x80:
        raise ValueError("truncated varint stream")
    ends = np.flatnonzero(b < 0x80)
    starts = np.concatenate(([0], ends[:-1] + 1))
    group = np.repeat(np.arange(ends.size), ends - starts + 1)
    shift = (np.arange(b.size) - starts[group]) * 7
    if shift.max() > 56:
        raise ValueError("varint wider than 63 bits")
    parts = (b & 0x7F).astype(np.int64) << shift.astype(np.int64)
    return np.add.reduceat(parts, starts)


def decode_ids(buf: bytes | memoryview | np.ndarray) -> np.ndarray:
    return np.cumsum(decode_array(buf))
