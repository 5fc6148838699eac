"""Seeded synthetic data: intent-style utterances and random weight maps."""
from __future__ import annotations

import numpy as np

_ONSETS = ["b", "ch", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "sh",
           "t", "th", "v", "w", "z", "br", "cl", "dr", "gr", "pl", "st", "tr"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ea", "oo", "ou"]
_CODAS = ["", "", "n", "r", "s", "t", "l", "m", "ck", "nd"]


def _words(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < count:
        syl = rng.integers(1, 4)
        w = "".join(
            _ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
            + _CODAS[rng.integers(len(_CODAS))]
            for _ in range(syl)
        )
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def _zipf(n: int, s: float = 1.1) -> np.ndarray:
    p = 1.0 / np.arange(1, n + 1) ** s
    return p / p.sum()


def intent_dataset(n: int, n_classes: int = 6, seed: int = 0, *,
                   topic_words: int = 60, shared_words: int = 120, tail_words: int = 20000,
                   p_topic: float = 0.4, p_confuser: float = 0.1, p_tail: float = 0.15
                   ) -> list[tuple[str, str]]:
    """``n`` labelled utterances over ``n_classes`` intents.

    Each intent owns a Zipf-distributed topic vocabulary; tokens are drawn
    from it, from another intent's vocabulary (confusers), from a shared pool
    of carrier words, or from a long uniform tail that keeps unseen n-grams
    common at test time.  Use :func:`intent_split` for a train/test pair
    that shares one vocabulary.
    """
    return intent_split(n, 0, n_classes, seed, topic_words=topic_words,
                        shared_words=shared_words, tail_words=tail_words, p_topic=p_topic,
                        p_confuser=p_confuser, p_tail=p_tail)[0]


def intent_split(n_train: int, n_test: int, n_classes: int = 6, seed: int = 0, *,
                 topic_words: int = 60, shared_words: int = 120, tail_words: int = 20000,
                 p_topic: float = 0.4, p_confuser: float = 0.1, p_tail: float = 0.15
                 ) -> tuple[list[tuple[str, str]], list[tuple[str, str]]]:
    if n_classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    taken: set[str] = set()
    labels = [f"Intent{i}" for i in range(n_classes)]
    topics = [_words(rng, topic_words, taken) for _ in labels]
    shared = _words(rng, shared_words, taken)
    tail = _words(rng, tail_words, taken)
    p_top, p_sh = _zipf(topic_words), _zipf(shared_words, 1.0)
    p_shared = 1.0 - p_topic - p_confuser - p_tail

    def draw(count: int) -> list[tuple[str, str]]:
        out = []
        for _ in range(count):
            c = int(rng.integers(n_classes))
            kinds = rng.choice(4, size=int(rng.integers(3, 11)),
                               p=[p_topic, p_confuser, p_tail, p_shared])
            toks = []
            for kind in kinds:
                if kind == 0:
                    toks.append(topics[c][rng.choice(topic_words, p=p_top)])
                elif kind == 1:
                    other = (c + 1 + int(rng.integers(n_classes - 1))) % n_classes
                    toks.append(topics[other][rng.choice(topic_words, p=p_top)])
                elif kind == 2:
                    toks.append(tail[int(rng.integers(tail_words))])
                else:
                    toks.append(shared[rng.choice(shared_words, p=p_sh)])
            out.append((labels[c], " ".join(toks)))
        return out

    return draw(n_train), draw(n_test)


def random_weight_map(n: int, seed: int = 0, key_bytes: int = 20, prefix: bytes = b"m:",
                      scale: float = 1.0) -> dict[bytes, float]:
    """``n`` distinct random keys of exactly ``key_bytes`` bytes with Gaussian weights.

    Every key starts with ``prefix``; probes built with a different prefix
    are non-members by construction.
    """
    body = key_bytes - len(prefix)
    if body < 8:
        raise ValueError("keys too short to stay distinct")
    rng = np.random.default_rng(seed)
    out: dict[bytes, float] = {}
    while len(out) < n:
        need = n - len(out)
        raw = rng.integers(ord("a"), ord("z") + 1, size=(need, body), dtype=np.uint8)
        w = rng.normal(0.0, scale, size=need)
        for row, wt in zip(raw, w):
            if wt != 0:
                out[prefix + row.tobytes()] = float(wt)
    return out


def probe_keys(n: int, seed: int = 0, key_bytes: int = 20, prefix: bytes = b"p:") -> list[bytes]:
    rng = np.random.default_rng(seed)
    raw = rng.integers(0, 256, size=(n, key_bytes - len(prefix)), dtype=np.uint8)
    return [prefix + r.tobytes() for r in raw]
