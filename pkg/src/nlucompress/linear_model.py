"""Sparse n-gram MaxEnt classifier over a plain or compressed weight map.

Weights are keyed by ``class + "\\x1f" + feature``.  Biases are kept apart
in full precision and never go through the compressed map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .compressed_map import CompressedWeightMap
from .quantizer import DEFAULT_K

SEP = "\x1f"
BIAS_FEATURE = "__BIAS__"
BOS, EOS = "<s>", "</s>"
DEFAULT_MAX_NGRAM = 2
PRUNE_BELOW = 1e-8

Example = tuple[str, str]  # (label, utterance)


class ModelFormatError(ValueError):
    def __init__(self, line_no: int, msg: str):
        super().__init__(f"line {line_no}: {msg}")
        self.line_no = line_no


def composite_key(label: str, feature: str) -> str:
    return f"{label}{SEP}{feature}"


def split_key(key: str) -> tuple[str, str]:
    label, _, feature = key.partition(SEP)
    return label, feature


def _check_label(label: str) -> None:
    if not label or SEP in label:
        raise ValueError(f"class label {label!r} is empty or contains 0x1f")


def extract_features(utterance: str, max_ngram: int = DEFAULT_MAX_NGRAM) -> frozenset[str]:
    """Lowercased whitespace n-grams for ``n = 1..max_ngram``.

    Higher orders see ``<s>``/``</s>`` markers at the ends; unigrams do not,
    so an empty utterance yields only the marker bigram.
    """
    if max_ngram < 1:
        raise ValueError(f"max_ngram must be >= 1, got {max_ngram}")
    tokens = utterance.lower().split()
    feats = set(tokens)
    padded = [BOS, *tokens, EOS]
    for n in range(2, max_ngram + 1):
        for i in range(len(padded) - n + 1):
            feats.add(" ".join(padded[i:i + n]))
    return frozenset(feats)


@dataclass
class SourceModel:
    """Full-precision model: the uncompressed baseline."""

    classes: list[str]
    weights: dict[str, float]
    biases: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for c in self.classes:
            _check_label(c)
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("duplicate class labels")
        known = set(self.classes)
        for key in self.weights:
            label = split_key(key)[0]
            if label not in known:
                raise ValueError(f"weight key {key!r} names unknown class {label!r}")
        self.weights = {k: float(w) for k, w in self.weights.items() if w != 0}
        self.biases = {c: float(self.biases.get(c, 0.0)) for c in self.classes}

    def bias_vector(self) -> np.ndarray:
        return np.array([self.biases[c] for c in self.classes])

    def weights_for(self, keys: Sequence[bytes]) -> tuple[np.ndarray, np.ndarray]:
        get = self.weights.get
        vals = [get(k.decode("utf-8")) for k in keys]
        present = np.fromiter((v is not None for v in vals), bool, len(vals))
        return np.array([v or 0.0 for v in vals], dtype=np.float64), present

    def to_tsv(self) -> str:
        lines = [f"{c}\t{BIAS_FEATURE}\t{self.biases[c]!r}" for c in self.classes]
        for key in sorted(self.weights):
            label, feat = split_key(key)
            lines.append(f"{label}\t{feat}\t{self.weights[key]!r}")
        return "\n".join(lines) + "\n"

    def save_tsv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8")


def parse_model_tsv(lines: Iterable[str]) -> SourceModel:
    """Parse ``class<TAB>feature<TAB>weight`` rows; ``#`` lines are comments."""
    classes: list[str] = []
    seen: set[str] = set()
    weights: dict[str, float] = {}
    biases: dict[str, float] = {}
    for line_no, line in enumerate(lines, 1):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ModelFormatError(line_no, f"expected 3 tab-separated fields, got {len(parts)}")
        label, feat, raw = parts
        if not label or SEP in label or SEP in feat:
            raise ModelFormatError(line_no, "empty class label or 0x1f separator in a field")
        try:
            w = float(raw)
        except ValueError:
            raise ModelFormatError(line_no, f"weight {raw!r} is not a number") from None
        if not math.isfinite(w):
            raise ModelFormatError(line_no, f"weight {raw!r} is not finite")
        if label not in seen:
            seen.add(label)
            classes.append(label)
        if feat == BIAS_FEATURE:
            biases[label] = w
            continue
        key = composite_key(label, feat)
        if key in weights:
            raise ModelFormatError(line_no, f"duplicate entry for class {label!r} feature {feat!r}")
        weights[key] = w
    if not classes:
        raise ModelFormatError(0, "model has no rows")
    return SourceModel(classes, weights, biases)


def load_model_tsv(path: str | Path) -> SourceModel:
    with open(path, encoding="utf-8") as f:
        return parse_model_tsv(f)


def parse_dataset_tsv(lines: Iterable[str]) -> list[Example]:
    data = []
    for line_no, line in enumerate(lines, 1):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        label, tab, text = line.partition("\t")
        if not tab:
            raise ModelFormatError(line_no, "expected class<TAB>utterance")
        data.append((label, text))
    return data


def load_dataset_tsv(path: str | Path) -> list[Example]:
    with open(path, encoding="utf-8") as f:
        return parse_dataset_tsv(f)


class CompressedModel:
    """Classifier whose weights live in a :class:`CompressedWeightMap`."""

    def __init__(self, classes: Sequence[str], biases: dict[str, float],
                 cmap: CompressedWeightMap):
        self.classes = list(classes)
        self.biases = {c: float(biases.get(c, 0.0)) for c in self.classes}
        self.cmap = cmap

    def bias_vector(self) -> np.ndarray:
        return np.array([self.biases[c] for c in self.classes])

    def weights_for(self, keys: Sequence[bytes]) -> tuple[np.ndarray, np.ndarray]:
        return self.cmap.lookup_many(keys)


Model = SourceModel | CompressedModel


def compress_model(src: SourceModel, k: int = DEFAULT_K, epsilon: float = 1e-4,
                   **build_kw) -> CompressedModel:
    entries = {key.encode("utf-8"): w for key, w in src.weights.items()}
    cmap = CompressedWeightMap.build(entries, k, epsilon, **build_kw)
    return CompressedModel(src.classes, src.biases, cmap)


def _class_keys(classes: Sequence[str], feats: Iterable[str]) -> list[bytes]:
    feats = sorted(feats)
    return [composite_key(c, f).encode("utf-8") for c in classes for f in feats]


def score(model: Model, fv: Iterable[str]) -> np.ndarray:
    """Per-class score: bias plus the weights of every active feature."""
    feats = sorted(fv)
    w, _ = model.weights_for(_class_keys(model.classes, feats))
    per_class = w.reshape(len(model.classes), len(feats)).sum(axis=1) if feats else 0.0
    return model.bias_vector() + per_class


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict(model: Model, utterance: str, max_ngram: int = DEFAULT_MAX_NGRAM) -> str:
    s = score(model, extract_features(utterance, max_ngram))
    return model.classes[int(np.argmax(s))]  # argmax keeps the first of ties


def score_many(model: Model, utterances: Sequence[str],
               max_ngram: int = DEFAULT_MAX_NGRAM) -> np.ndarray:
    """Score matrix of shape ``(len(utterances), n_classes)`` in one batch."""
    n_cls = len(model.classes)
    keys: list[bytes] = []
    groups: list[np.ndarray] = []
    for u, text in enumerate(utterances):
        feats = extract_features(text, max_ngram)
        keys.extend(_class_keys(model.classes, feats))
        groups.append(np.repeat(np.arange(n_cls) + u * n_cls, len(feats)))
    w, _ = model.weights_for(keys)
    group = np.concatenate(groups) if groups else np.zeros(0, dtype=np.int64)
    sums = np.bincount(group, weights=w, minlength=len(utterances) * n_cls)
    return sums.reshape(len(utterances), n_cls) + model.bias_vector()


def predict_many(model: Model, utterances: Sequence[str],
                 max_ngram: int = DEFAULT_MAX_NGRAM) -> list[str]:
    if not utterances:
        return []
    best = np.argmax(score_many(model, utterances, max_ngram), axis=1)
    return [model.classes[i] for i in best]


# -- training -----------------------------------------------------------------


class SgdTrainer:
    """Per-example SGD on multinomial logistic loss.

    L1 uses the cumulative-penalty clipping of Tsuruoka et al. (2009), which
    drives weights to exact zeros without touching every row on every step.
    ``epoch_losses`` records the mean training log-loss after each epoch.
    """

    def __init__(self, epochs: int = 10, lr: float = 0.1, l1: float = 0.0, seed: int = 0,
                 max_ngram: int = DEFAULT_MAX_NGRAM):
        if epochs < 0 or lr <= 0 or l1 < 0:
            raise ValueError("epochs must be >= 0, lr > 0 and l1 >= 0")
        self.epochs = epochs
        self.lr = lr
        self.l1 = l1
        self.seed = seed
        self.max_ngram = max_ngram
        self.epoch_losses: list[float] = []

    def fit(self, dataset: Sequence[Example]) -> SourceModel:
        classes = sorted({label for label, _ in dataset})
        if len(classes) < 2:
            raise ValueError(f"training needs at least 2 classes, got {len(classes)}")
        for c in classes:
            _check_label(c)
        cls_index = {c: i for i, c in enumerate(classes)}
        vocab: dict[str, int] = {}
        rows = []
        for _, text in dataset:
            feats = sorted(extract_features(text, self.max_ngram))
            rows.append(np.array([vocab.setdefault(f, len(vocab)) for f in feats], dtype=np.int64))
        y = np.array([cls_index[label] for label, _ in dataset])
        X = _csr(rows, len(vocab))

        n_cls = len(classes)
        W = np.zeros((len(vocab), n_cls))
        b = np.zeros(n_cls)
        q = np.zeros_like(W) if self.l1 else None
        u = 0.0
        rng = np.random.default_rng(self.seed)
        self.epoch_losses = []
        for _ in range(self.epochs):
            for i in rng.permutation(len(rows)):
                idx = rows[i]
                g = softmax(b + W[idx].sum(axis=0))
                g[y[i]] -= 1.0
                g *= self.lr
                W[idx] -= g
                b -= g
                if q is not None:
                    u += self.lr * self.l1
                    z = W[idx]
                    clipped = np.where(z > 0, np.maximum(0.0, z - (u + q[idx])),
                                       np.where(z < 0, np.minimum(0.0, z + (u - q[idx])), z))
                    q[idx] += clipped - z
                    W[idx] = clipped
            self.epoch_losses.append(_log_loss(X, y, W, b))

        weights = {}
        for f, j in vocab.items():
            for ci, c in enumerate(classes):
                if abs(W[j, ci]) >= PRUNE_BELOW:
                    weights[composite_key(c, f)] = float(W[j, ci])
        return SourceModel(classes, weights, dict(zip(classes, map(float, b))))


def _csr(rows: list[np.ndarray], n_cols: int) -> sp.csr_matrix:
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum([len(r) for r in rows], out=indptr[1:])
    indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    data = np.ones(len(indices))
    return sp.csr_matrix((data, indices, indptr), shape=(len(rows), n_cols))


def _log_loss(X: sp.csr_matrix, y: np.ndarray, W: np.ndarray, b: np.ndarray) -> float:
    z = X @ W + b
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())


def train_sgd(dataset: Sequence[Example], epochs: int = 10, lr: float = 0.1, l1: float = 0.0,
              seed: int = 0, max_ngram: int = DEFAULT_MAX_NGRAM) -> SourceModel:
    return SgdTrainer(epochs, lr, l1, seed, max_ngram).fit(dataset)


# -- evaluation ---------------------------------------------------------------


@dataclass
class AgreementReport:
    n_utterances: int
    agreement_rate: float
    src_accuracy: float
    comp_accuracy: float
    relative_error_increase: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def accuracy(model: Model, testset: Sequence[Example], max_ngram: int = DEFAULT_MAX_NGRAM) -> float:
    preds = predict_many(model, [t for _, t in testset], max_ngram)
    return float(np.mean([p == label for p, (label, _) in zip(preds, testset)]))


def evaluate_agreement(src: Model, comp: Model, testset: Sequence[Example],
                       max_ngram: int = DEFAULT_MAX_NGRAM) -> AgreementReport:
    """Compare predictions of two models sharing a class list."""
    if list(src.classes) != list(comp.classes):
        raise ValueError(f"class lists differ: {src.classes} vs {comp.classes}")
    texts = [t for _, t in testset]
    gold = [label for label, _ in testset]
    p_src = predict_many(src, texts, max_ngram)
    p_comp = predict_many(comp, texts, max_ngram)
    n = len(testset)
    if n == 0:
        return AgreementReport(0, 1.0, 0.0, 0.0, 0.0)
    agree = sum(a == b for a, b in zip(p_src, p_comp)) / n
    acc_src = sum(a == g for a, g in zip(p_src, gold)) / n
    acc_comp = sum(a == g for a, g in zip(p_comp, gold)) / n
    err_src, err_comp = 1 - acc_src, 1 - acc_comp
    if err_src > 0:
        rel = (err_comp - err_src) / err_src
    else:
        rel = 0.0 if err_comp == 0 else math.inf
    return AgreementReport(n, agree, acc_src, acc_comp, rel)
