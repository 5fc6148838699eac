"""Minimal perfect hash over a static key set, built level by level.

Level ``i`` hashes the keys still unplaced with seed ``i`` into a bit array
of ``ceil(gamma * |S_i|)`` buckets.  Buckets hit by exactly one key get a 1
and that key is placed; every other key moves on to level ``i + 1``.  The
level arrays are concatenated into one rank bit vector, and a placed key's
index is the number of ones preceding its bit.

Keys still unplaced after ``max_levels`` go to an explicit spill map and take
the indices after the last placed key, so the function stays minimal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .hashing import KeyBatch, as_key, as_keys, hash64
from .rank import RankBitVector

DEFAULT_MAX_LEVELS = 64
LEVEL_META_BITS = 64  # one u64 size per level in the container


class DuplicateKeyError(ValueError):
    def __init__(self, key: bytes):
        super().__init__(f"duplicate key: {key!r}")
        self.key = key


def level_size(n_remaining: int, gamma: float) -> int:
    return max(1, math.ceil(gamma * n_remaining))


def _find_duplicate(keys: Sequence[bytes]) -> bytes:
    seen = set()
    for k in keys:
        if k in seen:
            return k
        seen.add(k)
    raise AssertionError("no duplicate present")


@dataclass
class Mphf:
    level_sizes: list[int]
    bits: RankBitVector
    spill: dict[bytes, int] = field(default_factory=dict)
    gamma: float = 1.0
    # per-level |S_i|, kept from construction for diagnostics; not serialized
    level_inputs: list[int] = field(default_factory=list, compare=False)

    def __post_init__(self):
        self.level_offsets = np.concatenate(
            [[0], np.cumsum(self.level_sizes, dtype=np.int64)]
        ).astype(np.int64)
        if int(self.level_offsets[-1]) != len(self.bits):
            raise ValueError("level sizes do not add up to the bit vector length")
        self.n_placed = self.bits.total
        self.n_keys = self.n_placed + len(self.spill)

    @property
    def n_levels(self) -> int:
        return len(self.level_sizes)

    @classmethod
    def construct(cls, keys: Iterable[bytes | str], max_levels: int = DEFAULT_MAX_LEVELS,
                  gamma: float = 1.0) -> "Mphf":
        return construct_indexed(keys, max_levels, gamma)[0]

    def evaluate(self, key: bytes | str) -> int | None:
        """Index of ``key``, or ``None`` if no level claims it.

        Non-members usually land on some member's index; only a fingerprint
        can tell them apart.
        """
        key = as_key(key)
        if self.spill:
            hit = self.spill.get(key)
            if hit is not None:
                return hit
        for i, m in enumerate(self.level_sizes):
            pos = int(self.level_offsets[i]) + hash64(key, i) % m
            if self.bits.get(pos):
                return self.bits.rank(pos)
        return None

    def evaluate_many(self, keys: Sequence[bytes | str] | KeyBatch,
                      raw_keys: Sequence[bytes] | None = None) -> np.ndarray:
        """Vectorized :meth:`evaluate`; ``-1`` marks absent keys."""
        batch = keys if isinstance(keys, KeyBatch) else KeyBatch.from_keys(keys)
        n = len(batch)
        out = np.full(n, -1, dtype=np.int64)
        pending = np.arange(n)
        if self.spill:
            if raw_keys is None and isinstance(keys, KeyBatch):
                raise ValueError("raw_keys is required to check the spill map")
            raw_keys = as_keys(keys if raw_keys is None else raw_keys)
            spill_hits = [(j, self.spill[k]) for j, k in enumerate(raw_keys) if k in self.spill]
            if spill_hits:
                rows, vals = zip(*spill_hits)
                out[list(rows)] = vals
                pending = np.setdiff1d(pending, rows)
        sub = batch.take(pending) if len(pending) < n else batch
        for i, m in enumerate(self.level_sizes):
            if len(pending) == 0:
                break
            pos = (sub.hash(i) % np.uint64(m)).astype(np.int64) + self.level_offsets[i]
            hit = self.bits.get_many(pos)
            if hit.any():
                out[pending[hit]] = self.bits.rank_many(pos[hit])
                pending = pending[~hit]
                sub = sub.take(np.flatnonzero(~hit))
        return out

    def size_bits(self) -> dict[str, int]:
        spill_bits = sum(32 + 8 * len(k) + 64 for k in self.spill)
        return {
            "levels": len(self.bits),
            "rank": self.bits.overhead_bits(),
            "level_meta": 32 + LEVEL_META_BITS * self.n_levels,
            "spill": 64 + spill_bits,
        }


def construct_indexed(keys: Iterable[bytes | str], max_levels: int = DEFAULT_MAX_LEVELS,
                      gamma: float = 1.0) -> tuple[Mphf, np.ndarray]:
    """Build an :class:`Mphf` and return it with each input key's index."""
    if gamma < 1.0:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    if max_levels < 0:
        raise ValueError(f"max_levels must be >= 0, got {max_levels}")
    keys = as_keys(keys)
    n = len(keys)
    if len(set(keys)) != n:
        raise DuplicateKeyError(_find_duplicate(keys))

    batch = KeyBatch.from_keys(keys)
    remaining = np.arange(n)
    sub = batch
    position = np.full(n, -1, dtype=np.int64)
    level_sizes: list[int] = []
    level_inputs: list[int] = []
    level_bits: list[np.ndarray] = []
    offset = 0
    for i in range(max_levels):
        if len(remaining) == 0:
            break
        m = level_size(len(remaining), gamma)
        h = (sub.hash(i) % np.uint64(m)).astype(np.int64)
        counts = np.bincount(h, minlength=m)
        single = counts[h] == 1
        position[remaining[single]] = offset + h[single]
        level_bits.append(counts == 1)
        level_sizes.append(m)
        level_inputs.append(len(remaining))
        offset += m
        remaining = remaining[~single]
        sub = sub.take(np.flatnonzero(~single))

    bits = RankBitVector.build(np.concatenate(level_bits) if level_bits else np.zeros(0, bool))
    index = np.full(n, -1, dtype=np.int64)
    placed = position >= 0
    index[placed] = bits.rank_many(position[placed])
    spill = {}
    for j, row in enumerate(remaining):
        spill[keys[row]] = bits.total + j
        index[row] = bits.total + j
    mphf = Mphf(level_sizes, bits, spill, gamma, level_inputs)
    return mphf, index
