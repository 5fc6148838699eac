"""Compression of sparse linear NLU models.

Weights are linearly quantized to ``k`` centers and stored without keys,
addressed by a minimal perfect hash, with optional per-slot fingerprints to
reject most lookups of absent features.
"""
from .compressed_map import CompressedWeightMap, LookupResult, Status
from .hashing import hash64, reduce
from .linear_model import (
    CompressedModel,
    SourceModel,
    compress_model,
    evaluate_agreement,
    extract_features,
    train_sgd,
)
from .mphf import Mphf
from .quantizer import QuantizerTable
from .rank import RankBitVector

__all__ = [
    "CompressedModel",
    "CompressedWeightMap",
    "LookupResult",
    "Mphf",
    "QuantizerTable",
    "RankBitVector",
    "SourceModel",
    "Status",
    "compress_model",
    "evaluate_agreement",
    "extract_features",
    "hash64",
    "reduce",
    "train_sgd",
]
