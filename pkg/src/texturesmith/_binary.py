"""Little-endian binary stream helpers for the weights/descriptor/unary formats."""

from __future__ import annotations

import struct

import numpy as np

from .errors import TruncatedStreamError


class Reader:
    """Sequential reader over bytes; every read checks the remaining length."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise TruncatedStreamError(
                f"need {n} bytes at offset {self._pos}, stream has {len(self._data)}"
            )
        out = self._data[self._pos:self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f32(self) -> float:
        return struct.unpack("<f", self.take(4))[0]

    def f32_array(self, count: int) -> np.ndarray:
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4", count=count).copy()

    @property
    def exhausted(self) -> bool:
        return self._pos == len(self._data)

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos


def pack_u32(value: int) -> bytes:
    return struct.pack("<I", value)


def pack_f32(value: float) -> bytes:
    return struct.pack("<f", value)


def pack_f32_array(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<f4").tobytes()
