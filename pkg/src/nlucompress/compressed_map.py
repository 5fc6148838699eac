"""Key-free weight store: MPHF slots holding fingerprints and quantized indices.

A member key always reads back its quantized weight.  A non-member is
rejected when its fingerprint disagrees with the one stored in the slot it
hashes to; otherwise it silently reads that slot's weight.  With ``b``
fingerprint bits the false-positive rate is ``2**-b``.

Container layout (little-endian throughout)::

    magic "CWM1" | version u16 | hash algorithm u8 | flags u8 | k u32
    | fingerprint_bits u8 | gamma f64 | n_keys u64
    | mphf:        level count u32, level sizes u64 each, bit words u64
    | quantizer:   k u32, k centers f64
    | fingerprints: packed words u64
    | indices:      packed words u64
    | spill:        count u64, then (key length u32, key bytes, index u64)
    | CRC-32 u32 over everything before it
"""
from __future__ import annotations

import enum
import io
import math
import struct
import zlib
from typing import BinaryIO, Mapping, NamedTuple, Sequence

import numpy as np

from . import hashing
from .hashing import KeyBatch, as_key
from .mphf import DEFAULT_MAX_LEVELS, Mphf, construct_indexed
from .packed import PackedArray
from .quantizer import DEFAULT_K, QuantizerTable
from .rank import RankBitVector

MAGIC = b"CWM1"
FORMAT_VERSION = 1
FLAG_MODULO_REDUCTION = 0x01
FP_SEED = 1 << 32

HEADER = struct.Struct("<4sHBBIBdQ")
_CRC = struct.Struct("<I")


class Status(str, enum.Enum):
    PRESENT_PROBABLY = "present-probably"
    ABSENT_CERTAIN = "absent-certain"

    def __str__(self) -> str:
        return self.value


class LookupResult(NamedTuple):
    weight: float
    status: Status


class ContainerError(ValueError):
    """Base class for unreadable container files."""


class BadMagicError(ContainerError):
    pass


class UnsupportedVersionError(ContainerError):
    pass


class UnknownHashAlgorithmError(ContainerError):
    pass


class TruncatedError(ContainerError):
    pass


class ChecksumMismatchError(ContainerError):
    pass


def fingerprint_bits_for(epsilon: float) -> int:
    """Whole bits needed so that ``2**-b <= epsilon``."""
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must be in (0, 1], got {epsilon}")
    # the small slack keeps exact powers of two like 1/256 from rounding up
    return min(64, max(0, math.ceil(math.log2(1 / epsilon) - 1e-9)))


def _fp_mask(bits: int) -> np.uint64:
    return np.uint64((1 << bits) - 1)


class CompressedWeightMap:
    def __init__(self, mphf: Mphf, fingerprints: PackedArray, qindices: PackedArray,
                 table: QuantizerTable):
        if len(fingerprints) != mphf.n_keys or len(qindices) != mphf.n_keys:
            raise ValueError("fingerprint and index arrays must have one entry per key")
        if qindices.width != table.index_bits:
            raise ValueError("index width does not match the quantizer table")
        self.mphf = mphf
        self.fingerprints = fingerprints
        self.qindices = qindices
        self.table = table

    @property
    def fingerprint_bits(self) -> int:
        return self.fingerprints.width

    @property
    def n_keys(self) -> int:
        return self.mphf.n_keys

    @property
    def effective_epsilon(self) -> float:
        return 2.0 ** -self.fingerprint_bits

    def __len__(self) -> int:
        return self.n_keys

    @classmethod
    def build(cls, entries: Mapping[bytes | str, float], k: int = DEFAULT_K,
              epsilon: float = 1e-4, *, gamma: float = 1.0,
              max_levels: int = DEFAULT_MAX_LEVELS) -> "CompressedWeightMap":
        """Compress ``entries``; zero weights are dropped first."""
        b = fingerprint_bits_for(epsilon)
        keys: list[bytes] = []
        weights: list[float] = []
        for key, w in entries.items():
            if w != 0:
                keys.append(as_key(key))
                weights.append(float(w))
        if not keys:
            raise ValueError("no non-zero entries to compress")
        table = QuantizerTable.fit_linear(weights, k)

        mphf, slot = construct_indexed(keys, max_levels=max_levels, gamma=gamma)
        n = len(keys)
        fp = np.zeros(n, dtype=np.uint64)
        if b:
            fp[slot] = KeyBatch.from_keys(keys).hash(FP_SEED) & _fp_mask(b)
        q = np.zeros(n, dtype=np.uint64)
        q[slot] = table.quantize_many(weights).astype(np.uint64)
        return cls(mphf, PackedArray.from_values(fp, b), PackedArray.from_values(q, table.index_bits), table)

    def lookup(self, key: bytes | str) -> LookupResult:
        key = as_key(key)
        slot = self.mphf.evaluate(key)
        if slot is None:
            return LookupResult(0.0, Status.ABSENT_CERTAIN)
        b = self.fingerprint_bits
        if b and key not in self.mphf.spill:
            if hashing.hash64(key, FP_SEED) & ((1 << b) - 1) != self.fingerprints[slot]:
                return LookupResult(0.0, Status.ABSENT_CERTAIN)
        return LookupResult(self.table.dequantize(self.qindices[slot]), Status.PRESENT_PROBABLY)

    def lookup_many(self, keys: Sequence[bytes | str]) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :meth:`lookup`.

        Returns ``(weights, present)``: float64 weights (0 where absent) and a
        boolean mask that is False exactly where the result is absent-certain.
        """
        if not isinstance(keys, list):
            keys = list(keys)
        batch = KeyBatch.from_keys(keys)
        slot = self.mphf.evaluate_many(batch, raw_keys=keys)
        present = slot >= 0
        b = self.fingerprint_bits
        if b and present.any():
            rows = np.flatnonzero(present)
            fp = batch.take(rows).hash(FP_SEED) & _fp_mask(b)
            ok = fp == self.fingerprints.get_many(slot[rows])
            if self.mphf.spill:
                spill = self.mphf.spill
                ok |= np.fromiter((as_key(keys[r]) in spill for r in rows), bool, len(rows))
            present[rows[~ok]] = False
        weights = np.zeros(len(keys), dtype=np.float64)
        rows = np.flatnonzero(present)
        weights[rows] = self.table.dequantize_many(self.qindices.get_many(slot[rows]))
        return weights, present

    # -- serialization --------------------------------------------------

    def to_bytes(self) -> bytes:
        m = self.mphf
        out = io.BytesIO()
        out.write(HEADER.pack(MAGIC, FORMAT_VERSION, hashing.ALGORITHM_ID,
                               FLAG_MODULO_REDUCTION, self.table.k, self.fingerprint_bits,
                               m.gamma, self.n_keys))
        out.write(struct.pack("<I", m.n_levels))
        out.write(np.asarray(m.level_sizes, dtype="<u8").tobytes())
        out.write(m.bits.words.astype("<u8").tobytes())
        out.write(struct.pack("<I", self.table.k))
        out.write(self.table.centers.astype("<f8").tobytes())
        out.write(self.fingerprints.words.astype("<u8").tobytes())
        out.write(self.qindices.words.astype("<u8").tobytes())
        out.write(struct.pack("<Q", len(m.spill)))
        for key, index in m.spill.items():
            out.write(struct.pack("<I", len(key)))
            out.write(key)
            out.write(struct.pack("<Q", index))
        body = out.getvalue()
        return body + _CRC.pack(zlib.crc32(body))

    def save(self, sink: BinaryIO) -> int:
        data = self.to_bytes()
        sink.write(data)
        return len(data)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CompressedWeightMap":
        data = bytes(data)
        if len(data) < 4 or data[:4] != MAGIC:
            raise BadMagicError(f"not a compressed weight map (magic {data[:4]!r})")
        if len(data) < HEADER.size + _CRC.size:
            raise TruncatedError(f"file is {len(data)} bytes, shorter than the fixed header")
        body, (crc,) = data[:-_CRC.size], _CRC.unpack(data[-_CRC.size:])
        if zlib.crc32(body) != crc:
            raise ChecksumMismatchError("CRC-32 mismatch; file is corrupt or truncated")
        _, version, algo, flags, k, b, gamma, n_keys = HEADER.unpack_from(body)
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"format version {version} is not supported")
        if algo != hashing.ALGORITHM_ID:
            raise UnknownHashAlgorithmError(f"hash algorithm id {algo} is not known")
        if not flags & FLAG_MODULO_REDUCTION:
            raise UnsupportedVersionError("only modulo bucket reduction is supported")
        reader = _Reader(body, HEADER.size)

        n_levels = reader.unpack("<I")
        level_sizes = [int(x) for x in reader.array("<u8", n_levels)]
        n_bits = sum(level_sizes)
        bits = RankBitVector(reader.array("<u8", (n_bits + 63) // 64), n_bits)
        if reader.unpack("<I") != k:
            raise ContainerError("quantizer size disagrees with the header")
        table = QuantizerTable.from_centers(reader.array("<f8", k))
        fps = PackedArray(reader.array("<u8", PackedArray.n_words(b, n_keys)), b, n_keys)
        qidx = PackedArray(reader.array("<u8", PackedArray.n_words(table.index_bits, n_keys)),
                           table.index_bits, n_keys)
        spill = {}
        for _ in range(reader.unpack("<Q")):
            key = reader.take(reader.unpack("<I"))
            spill[key] = reader.unpack("<Q")
        if reader.pos != len(body):
            raise ContainerError(f"{len(body) - reader.pos} unexpected trailing bytes")
        mphf = Mphf(level_sizes, bits, spill, gamma)
        if mphf.n_keys != n_keys:
            raise ContainerError("key count disagrees with the stored hash function")
        return cls(mphf, fps, qidx, table)

    @classmethod
    def load(cls, source: BinaryIO) -> "CompressedWeightMap":
        return cls.from_bytes(source.read())

    # -- accounting -----------------------------------------------------

    def stats(self, avg_key_bytes: float | None = None, weight_bits: int = 64) -> dict:
        """Section sizes in bits, per-entry cost, and the plain-map baseline.

        ``memory_bits`` includes the rank table that is rebuilt on load;
        ``file_bits`` is the exact serialized size.
        """
        n = self.n_keys
        m = self.mphf.size_bits()
        sections = {
            "mphf_levels_bits": m["levels"],
            "rank_overhead_bits": m["rank"],
            "mphf_meta_bits": m["level_meta"],
            "spill_bits": m["spill"],
            "fingerprint_bits_total": self.fingerprints.size_bits(),
            "index_bits_total": self.qindices.size_bits(),
            "table_bits": self.table.size_bits(),
        }
        memory = sum(sections.values())
        header = 8 * (HEADER.size + _CRC.size)
        file_bits = 8 * len(self.to_bytes())
        report = {
            "n_keys": n,
            "k": self.table.k,
            "index_width": self.table.index_bits,
            "fingerprint_width": self.fingerprint_bits,
            "epsilon_effective": self.effective_epsilon,
            "n_levels": self.mphf.n_levels,
            "n_spill": len(self.mphf.spill),
            **sections,
            "header_bits": header,
            "memory_bits": memory,
            "file_bits": file_bits,
            "mphf_bits_per_entry": (m["levels"] + m["rank"] + m["level_meta"] + m["spill"]) / n,
            "bits_per_entry": memory / n,
        }
        if avg_key_bytes is not None:
            baseline = n * (8 * avg_key_bytes + weight_bits)
            report["avg_key_bytes"] = avg_key_bytes
            report["baseline_bits"] = baseline
            report["baseline_bits_per_entry"] = baseline / n
            report["fold_reduction"] = baseline / memory
        return report


class _Reader:
    def __init__(self, data: bytes, pos: int):
        self.data = data
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(f"payload ends at byte {len(self.data)}, needed {self.pos + n}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> int:
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))[0]

    def array(self, dtype: str, count: int) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(itemsize * count), dtype=dtype).copy()
