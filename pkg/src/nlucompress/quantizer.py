"""Linear weight quantization onto ``k`` evenly spaced centers."""
from __future__ import annotations

import math

import numpy as np

DEFAULT_K = 256


def index_bits_for(k: int) -> int:
    return math.ceil(math.log2(max(k, 2)))


class QuantizerTable:
    """Centers ``min_w + i * step`` for ``i`` in ``0..k-1``.

    Both extremes are centers, so the largest-magnitude weights survive
    quantization unchanged.  With ``k == 1`` the only center is the midpoint
    of the range.
    """

    def __init__(self, centers, min_w: float, max_w: float):
        self.centers = np.asarray(centers, dtype=np.float64)
        self.k = len(self.centers)
        if self.k < 1:
            raise ValueError("a quantizer table needs at least one center")
        self.min_w = float(min_w)
        self.max_w = float(max_w)
        if self.k >= 2:
            self.step = (self.max_w - self.min_w) / (self.k - 1)
        else:
            self.step = self.max_w - self.min_w
        self.index_bits = index_bits_for(self.k)

    @classmethod
    def fit_linear(cls, weights, k: int = DEFAULT_K) -> "QuantizerTable":
        weights = np.asarray(weights, dtype=np.float64)
        if weights.size == 0:
            raise ValueError("cannot fit a quantizer to an empty weight collection")
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if not np.isfinite(weights).all():
            raise ValueError("weights must be finite")
        lo, hi = float(weights.min()), float(weights.max())
        if k == 1:
            centers = np.array([(lo + hi) / 2])
        else:
            centers = lo + np.arange(k) * ((hi - lo) / (k - 1))
            centers[-1] = hi
        return cls(centers, lo, hi)

    @classmethod
    def from_centers(cls, centers) -> "QuantizerTable":
        """Rebuild a table from stored centers (the file keeps only these)."""
        centers = np.asarray(centers, dtype=np.float64)
        if len(centers) == 1:
            return cls(centers, centers[0], centers[0])
        return cls(centers, centers[0], centers[-1])

    def quantize_many(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if self.k == 1 or self.step == 0:
            return np.zeros(w.shape, dtype=np.int64)
        idx = np.floor((w - self.min_w) / self.step + 0.5)
        idx = np.clip(idx, 0, self.k - 1).astype(np.int64)
        # float rounding can land one off; settle on the truly nearest
        # stored center, ties going up
        for shift in (-1, 1):
            alt = np.clip(idx + shift, 0, self.k - 1)
            d_cur = np.abs(self.centers[idx] - w)
            d_alt = np.abs(self.centers[alt] - w)
            better = (d_alt < d_cur) | ((d_alt == d_cur) & (alt > idx))
            idx = np.where(better, alt, idx)
        return idx

    def quantize(self, w: float) -> int:
        return int(self.quantize_many(np.array([w]))[0])

    def dequantize(self, index: int) -> float:
        if not 0 <= index < self.k:
            raise IndexError(f"quantizer index {index} out of range [0, {self.k})")
        return float(self.centers[index])

    def dequantize_many(self, idx) -> np.ndarray:
        return self.centers[np.asarray(idx, dtype=np.int64)]

    def size_bits(self) -> int:
        return 32 + 64 * self.k

    def __repr__(self) -> str:
        return f"QuantizerTable(k={self.k}, min_w={self.min_w:g}, max_w={self.max_w:g})"
