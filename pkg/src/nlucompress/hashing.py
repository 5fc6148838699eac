"""Seeded 64-bit hash family.

Every hash in the package is the low 64 bits of MurmurHash3 x64/128 with the
seed widened to 64 bits (``h1 = h2 = seed``).  For seeds below 2**32 the
output is identical to the reference implementation.

Two routes compute the same function:

* :func:`hash64` is a plain-Python scalar version used for single lookups.
* :class:`KeyBatch` holds many keys as a zero-padded word matrix and hashes
  all of them at once with numpy, which is what construction and bulk
  lookups use.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

# Algorithm id written into container headers.
ALGORITHM_ID = 1
ALGORITHM_NAME = "murmur3_x64_128/low64/seed64"

MASK64 = (1 << 64) - 1

_C1 = 0x87C37B91114253D5
_C2 = 0x4CF5AD432745937F
_F1 = 0xFF51AFD7ED558CCD
_F2 = 0xC4CEB9FE1A85EC53


def _rotl(x: int, r: int) -> int:
    return ((x << r) | (x >> (64 - r))) & MASK64


def _fmix(k: int) -> int:
    k ^= k >> 33
    k = (k * _F1) & MASK64
    k ^= k >> 33
    k = (k * _F2) & MASK64
    k ^= k >> 33
    return k


def as_key(key: bytes | str) -> bytes:
    if isinstance(key, str):
        return key.encode("utf-8")
    return bytes(key)


def as_keys(keys: Iterable[bytes | str]) -> list[bytes]:
    return [k if type(k) is bytes else as_key(k) for k in keys]


def hash64(key: bytes | str, seed: int) -> int:
    """Hash ``key`` under ``seed`` to an unsigned 64-bit integer."""
    data = as_key(key)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must fit in 64 bits, got {seed}")
    n = len(data)
    h1 = h2 = seed
    nblocks = n // 16
    for i in range(nblocks):
        k1 = int.from_bytes(data[16 * i:16 * i + 8], "little")
        k2 = int.from_bytes(data[16 * i + 8:16 * i + 16], "little")

        k1 = (_rotl((k1 * _C1) & MASK64, 31) * _C2) & MASK64
        h1 ^= k1
        h1 = (_rotl(h1, 27) + h2) & MASK64
        h1 = (h1 * 5 + 0x52DCE729) & MASK64

        k2 = (_rotl((k2 * _C2) & MASK64, 33) * _C1) & MASK64
        h2 ^= k2
        h2 = (_rotl(h2, 31) + h1) & MASK64
        h2 = (h2 * 5 + 0x38495AB5) & MASK64

    tail = data[16 * nblocks:]
    if len(tail) > 8:
        k2 = int.from_bytes(tail[8:], "little")
        h2 ^= (_rotl((k2 * _C2) & MASK64, 33) * _C1) & MASK64
    if tail:
        k1 = int.from_bytes(tail[:8], "little")
        h1 ^= (_rotl((k1 * _C1) & MASK64, 31) * _C2) & MASK64

    h1 ^= n
    h2 ^= n
    h1 = (h1 + h2) & MASK64
    h2 = (h2 + h1) & MASK64
    h1 = _fmix(h1)
    h2 = _fmix(h2)
    return (h1 + h2) & MASK64


def reduce(h: int, m: int) -> int:
    """Map a 64-bit hash onto ``[0, m - 1]`` by plain modulo."""
    if m < 1:
        raise ValueError(f"bucket count must be >= 1, got {m}")
    return h % m


# -- vectorized route -------------------------------------------------------

_U = np.uint64
_VC1, _VC2, _VF1, _VF2 = _U(_C1), _U(_C2), _U(_F1), _U(_F2)


def _vrotl(x: np.ndarray, r: int) -> np.ndarray:
    return (x << _U(r)) | (x >> _U(64 - r))


def _vfmix(k: np.ndarray) -> np.ndarray:
    k = k ^ (k >> _U(33))
    k = k * _VF1
    k = k ^ (k >> _U(33))
    k = k * _VF2
    return k ^ (k >> _U(33))


class KeyBatch:
    """Many byte-string keys packed for vectorized hashing.

    Keys are copied into a row-per-key matrix of little-endian 64-bit words,
    zero padded so that every row has room for its full 16-byte blocks and a
    16-byte tail.
    """

    def __init__(self, words: np.ndarray, lengths: np.ndarray):
        self.words = words
        self.lengths = lengths

    @classmethod
    def from_keys(cls, keys: Iterable[bytes | str]) -> "KeyBatch":
        if not isinstance(keys, list):
            keys = list(keys)
        try:
            return cls._pack(keys)
        except (UnicodeEncodeError, TypeError, ValueError):
            # non-ASCII str or other buffer types: normalize, then pack
            return cls._pack(as_keys(keys))

    @classmethod
    def _pack(cls, keys: list) -> "KeyBatch":
        n = len(keys)
        lengths = np.fromiter(map(len, keys), dtype=np.uint64, count=n)
        maxlen = int(lengths.max()) if n else 0
        width = (maxlen // 16 + 1) * 16
        if n:
            # trailing NULs are dropped by the "S" dtype on read but kept in
            # the buffer, and lengths are tracked separately
            raw = np.array(keys, dtype=f"S{width}")
            words = np.frombuffer(raw.tobytes(), dtype="<u8").reshape(n, width // 8)
        else:
            words = np.zeros((0, width // 8), dtype="<u8")
        return cls(words.astype(np.uint64, copy=False), lengths)

    def __len__(self) -> int:
        return len(self.lengths)

    def take(self, idx: np.ndarray) -> "KeyBatch":
        sub = KeyBatch(self.words[idx], self.lengths[idx])
        if len(sub) and len(sub) < len(self) // 2:
            sub._trim()
        return sub

    def _trim(self) -> None:
        need = (int(self.lengths.max()) // 16 + 1) * 2
        if need < self.words.shape[1]:
            self.words = np.ascontiguousarray(self.words[:, :need])

    def hash(self, seed: int) -> np.ndarray:
        """Hash every key under ``seed``; returns a uint64 array."""
        n = len(self.lengths)
        h1 = np.full(n, seed, dtype=np.uint64)
        h2 = h1.copy()
        if n == 0:
            return h1
        nblocks = self.lengths // _U(16)
        max_blocks = int(nblocks.max())
        min_blocks = int(nblocks.min())
        for j in range(max_blocks):
            k1 = _vrotl(self.words[:, 2 * j] * _VC1, 31) * _VC2
            k2 = _vrotl(self.words[:, 2 * j + 1] * _VC2, 33) * _VC1
            n1 = h1 ^ k1
            n1 = (_vrotl(n1, 27) + h2) * _U(5) + _U(0x52DCE729)
            n2 = h2 ^ k2
            n2 = (_vrotl(n2, 31) + n1) * _U(5) + _U(0x38495AB5)
            if j < min_blocks:
                h1, h2 = n1, n2
            else:
                active = nblocks > _U(j)
                h1 = np.where(active, n1, h1)
                h2 = np.where(active, n2, h2)

        # padding is zero, and a zero tail word leaves the state untouched,
        # so the tail needs no length-dependent branching
        rows = np.arange(n)
        col = (nblocks * _U(2)).astype(np.intp)
        t1 = self.words[rows, col]
        t2 = self.words[rows, col + 1]
        h2 = h2 ^ (_vrotl(t2 * _VC2, 33) * _VC1)
        h1 = h1 ^ (_vrotl(t1 * _VC1, 31) * _VC2)

        h1 = h1 ^ self.lengths
        h2 = h2 ^ self.lengths
        h1 = h1 + h2
        h2 = h2 + h1
        h1 = _vfmix(h1)
        h2 = _vfmix(h2)
        return h1 + h2


def hash_many(keys: Sequence[bytes | str] | KeyBatch, seed: int) -> np.ndarray:
    batch = keys if isinstance(keys, KeyBatch) else KeyBatch.from_keys(keys)
    return batch.hash(seed)


def reduce_many(h: np.ndarray, m: int) -> np.ndarray:
    if m < 1:
        raise ValueError(f"bucket count must be >= 1, got {m}")
    return h % _U(m)
