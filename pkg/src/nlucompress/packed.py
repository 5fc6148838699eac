"""Fixed-width unsigned integers packed LSB-first into 64-bit words."""
from __future__ import annotations

import numpy as np

from .rank import pack_bits

_U = np.uint64


class PackedArray:
    """``n`` unsigned integers of ``width`` bits each.

    Value ``i`` occupies bits ``[i * width, (i + 1) * width)`` of the word
    stream, where bit ``j`` is bit ``j % 64`` of word ``j // 64``.  A value may
    straddle two words.  ``width == 0`` stores nothing and reads back zeros.
    """

    def __init__(self, words: np.ndarray, width: int, n: int):
        if not 0 <= width <= 64:
            raise ValueError(f"width must be in [0, 64], got {width}")
        expected = self.n_words(width, n)
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if len(words) != expected:
            raise ValueError(f"expected {expected} words for {n} x {width} bits, got {len(words)}")
        self.words = words
        self.width = width
        self.n = n
        self._mask = _U((1 << width) - 1)
        self._padded = np.concatenate([words, np.zeros(1, dtype=np.uint64)])

    @staticmethod
    def n_words(width: int, n: int) -> int:
        return (width * n + 63) // 64

    @classmethod
    def from_values(cls, values, width: int) -> "PackedArray":
        values = np.asarray(values, dtype=np.uint64)
        n = len(values)
        if width == 0:
            if values.size and values.max() != 0:
                raise ValueError("non-zero value cannot be stored in width 0")
            return cls(np.zeros(0, dtype=np.uint64), 0, n)
        if width < 64 and values.size and int(values.max()) >> width:
            raise ValueError(f"value {int(values.max())} does not fit in {width} bits")
        shifts = np.arange(width, dtype=np.uint64)
        bits = ((values[:, None] >> shifts) & _U(1)).astype(bool).ravel()
        return cls(pack_bits(bits), width, n)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.n:
            raise IndexError(f"index {i} out of range [0, {self.n})")
        if self.width == 0:
            return 0
        bit = i * self.width
        w, s = bit >> 6, bit & 63
        v = int(self._padded[w]) >> s
        if s + self.width > 64:
            v |= int(self._padded[w + 1]) << (64 - s)
        return v & int(self._mask)

    def get_many(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if self.width == 0:
            return np.zeros(len(idx), dtype=np.uint64)
        bit = idx * self.width
        w = bit >> 6
        s = (bit & 63).astype(np.uint64)
        lo = self._padded[w] >> s
        spill = s + _U(self.width) > _U(64)
        hi = self._padded[np.minimum(w + 1, len(self._padded) - 1)] << ((_U(64) - s) & _U(63))
        return (lo | np.where(spill, hi, _U(0))) & self._mask

    def to_numpy(self) -> np.ndarray:
        return self.get_many(np.arange(self.n))

    def size_bits(self) -> int:
        return self.width * self.n
