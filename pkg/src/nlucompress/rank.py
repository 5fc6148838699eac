"""Immutable bit vector with one-level chunked rank."""
from __future__ import annotations

import numpy as np

CHUNK_BITS = 512
_WORDS_PER_CHUNK = CHUNK_BITS // 64
_U = np.uint64


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a boolean array into little-endian uint64 words, LSB first."""
    bits = np.asarray(bits, dtype=bool)
    nwords = (len(bits) + 63) // 64
    raw = np.packbits(bits, bitorder="little")
    buf = np.zeros(nwords * 8, dtype=np.uint8)
    buf[:len(raw)] = raw
    return buf.view("<u8").astype(np.uint64)


def unpack_bits(words: np.ndarray, n_bits: int) -> np.ndarray:
    raw = np.asarray(words, dtype="<u8").view(np.uint8)
    return np.unpackbits(raw, count=n_bits, bitorder="little").astype(bool)


class RankBitVector:
    """Bit array plus cumulative popcounts sampled every 512 bits.

    ``rank(i)`` counts set bits strictly before position ``i``, so the set bit
    at position ``p`` gets the dense id ``rank(p)``.
    """

    chunk_size = CHUNK_BITS

    def __init__(self, words: np.ndarray, n_bits: int):
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if len(words) != (n_bits + 63) // 64:
            raise ValueError(f"{len(words)} words cannot hold exactly {n_bits} bits")
        if n_bits % 64 and int(words[-1]) >> (n_bits % 64):
            raise ValueError("bits past the end of the vector must be zero")
        self.words = words
        self.n_bits = n_bits

        n_chunks = max(1, (n_bits + CHUNK_BITS - 1) // CHUNK_BITS)
        per_word = np.bitwise_count(words).astype(np.uint64)
        padded = np.zeros(n_chunks * _WORDS_PER_CHUNK, dtype=np.uint64)
        padded[:len(per_word)] = per_word
        per_chunk = padded.reshape(n_chunks, _WORDS_PER_CHUNK).sum(axis=1)
        self.chunk_ranks = np.zeros(n_chunks, dtype=np.uint64)
        np.cumsum(per_chunk[:-1], out=self.chunk_ranks[1:])
        self.total = int(per_chunk.sum())
        # one spare zero word so vectorized reads at n_bits stay in bounds
        self._padded = np.concatenate([words, np.zeros(_WORDS_PER_CHUNK, dtype=np.uint64)])

    @classmethod
    def build(cls, bits) -> "RankBitVector":
        bits = np.asarray(bits, dtype=bool)
        return cls(pack_bits(bits), len(bits))

    def __len__(self) -> int:
        return self.n_bits

    def get(self, i: int) -> int:
        if not 0 <= i < self.n_bits:
            raise IndexError(f"bit index {i} out of range [0, {self.n_bits})")
        return (int(self.words[i >> 6]) >> (i & 63)) & 1

    def rank(self, i: int) -> int:
        if not 0 <= i <= self.n_bits:
            raise IndexError(f"rank position {i} out of range [0, {self.n_bits}]")
        if i == self.n_bits:
            return self.total
        chunk = i // CHUNK_BITS
        word = i >> 6
        r = int(self.chunk_ranks[chunk])
        for w in range(chunk * _WORDS_PER_CHUNK, word):
            r += int(self.words[w]).bit_count()
        offset = i & 63
        if offset:
            r += (int(self.words[word]) & ((1 << offset) - 1)).bit_count()
        return r

    def get_many(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_bits):
            raise IndexError("bit index out of range")
        return ((self.words[idx >> 6] >> (idx & 63).astype(np.uint64)) & _U(1)).astype(bool)

    def rank_many(self, idx: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`rank`; returns int64 counts."""
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() > self.n_bits):
            raise IndexError("rank position out of range")
        chunk = idx // CHUNK_BITS
        at_end = chunk >= len(self.chunk_ranks)
        chunk = np.minimum(chunk, len(self.chunk_ranks) - 1)
        word = idx >> 6
        r = self.chunk_ranks[chunk].astype(np.int64)
        first = chunk * _WORDS_PER_CHUNK
        for j in range(_WORDS_PER_CHUNK):
            w = first + j
            full = w < word
            r += np.where(full, np.bitwise_count(self._padded[np.minimum(w, len(self._padded) - 1)]), 0)
        offset = (idx & 63).astype(np.uint64)
        mask = (_U(1) << offset) - _U(1)
        r += np.bitwise_count(self._padded[word] & mask).astype(np.int64)
        return np.where(at_end, self.total, r)

    def overhead_bits(self) -> int:
        return 64 * len(self.chunk_ranks)
