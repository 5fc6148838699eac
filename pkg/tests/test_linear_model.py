import math
import statistics

import numpy as np
import pytest

from nlucompress import linear_model as lm
from nlucompress.datasets import intent_split

TOY = [
    ("Music", "play some jazz"),
    ("Music", "play the song"),
    ("Music", "put on music"),
    ("Music", "play rock music"),
    ("Music", "play jazz song"),
    ("Weather", "will it rain"),
    ("Weather", "is it cold outside"),
    ("Weather", "weather for today"),
    ("Weather", "will it snow today"),
    ("Weather", "how hot is it"),
]


@pytest.fixture(scope="module")
def intents():
    return intent_split(3000, 1000, n_classes=4, seed=7)


@pytest.fixture(scope="module")
def trained(intents):
    return lm.train_sgd(intents[0], epochs=5, seed=7)


def test_features_example():
    assert lm.extract_features("Play Music", 2) == {
        "play", "music", "<s> play", "play music", "music </s>"}


def test_features_edge_cases():
    assert lm.extract_features("", 1) == set()
    assert lm.extract_features("", 2) == {"<s> </s>"}
    assert lm.extract_features("a b a", 1) == {"a", "b"}
    assert "<s> a b" in lm.extract_features("a b", 3)
    with pytest.raises(ValueError):
        lm.extract_features("x", 0)


def test_features_never_contain_separator_or_tab():
    feats = lm.extract_features("a\x1fb\tc", 2)
    assert not any("\x1f" in f or "\t" in f for f in feats)


def test_single_class_always_predicted():
    m = lm.SourceModel(["Only"], {"Only\x1fx": -5.0})
    assert lm.predict(m, "x y z") == "Only"


def test_hand_dot_product():
    m = lm.SourceModel(["A", "B"], {"A\x1fx": 2.0, "B\x1fx": 1.0})
    s = lm.score(m, {"x"})
    assert list(s) == [2.0, 1.0]
    assert lm.predict(m, "x", 1) == "A"


def test_ties_go_to_first_class():
    m = lm.SourceModel(["B", "A"], {})
    assert lm.predict(m, "anything") == "B"


def test_bias_included():
    m = lm.SourceModel(["A", "B"], {"A\x1fx": 1.0}, {"B": 3.0})
    assert list(lm.score(m, {"x"})) == [1.0, 3.0]


def test_score_many_matches_score(trained, intents):
    texts = [t for _, t in intents[1][:50]]
    batch = lm.score_many(trained, texts)
    for row, text in zip(batch, texts):
        assert np.allclose(row, lm.score(trained, lm.extract_features(text)))


def test_source_model_validation():
    with pytest.raises(ValueError):
        lm.SourceModel(["A"], {"B\x1fx": 1.0})
    with pytest.raises(ValueError):
        lm.SourceModel(["A", "A"], {})
    with pytest.raises(ValueError):
        lm.SourceModel(["A\x1fB"], {})
    m = lm.SourceModel(["A"], {"A\x1fx": 0.0, "A\x1fy": 1.0})
    assert m.weights == {"A\x1fy": 1.0}


def test_tsv_roundtrip(trained):
    again = lm.parse_model_tsv(trained.to_tsv().splitlines(keepends=True))
    assert again.classes == trained.classes
    assert again.weights == trained.weights
    assert again.biases == trained.biases


def test_tsv_comments_and_errors():
    text = "# header\nA\t__BIAS__\t0.5\nA\tx\t1.5\nB\ty\t-2\n"
    m = lm.parse_model_tsv(text.splitlines())
    assert m.classes == ["A", "B"]
    assert m.biases == {"A": 0.5, "B": 0.0}
    bad = [f"A\tf{i}\t1" for i in range(6)] + ["A\tbroken"]
    with pytest.raises(lm.ModelFormatError) as e:
        lm.parse_model_tsv(bad)
    assert e.value.line_no == 7
    with pytest.raises(lm.ModelFormatError, match="line 2"):
        lm.parse_model_tsv(["A\tx\t1", "A\ty\tnope"])
    with pytest.raises(lm.ModelFormatError, match="duplicate"):
        lm.parse_model_tsv(["A\tx\t1", "A\tx\t2"])


def test_compressed_roundtrip_within_half_step(trained):
    comp = lm.compress_model(trained, 256, 1e-4)
    keys = [k.encode() for k in trained.weights]
    got, present = comp.weights_for(keys)
    want = np.array(list(trained.weights.values()))
    assert present.all()
    assert np.abs(got - want).max() <= comp.cmap.table.step / 2


def test_epsilon_one_is_smaller(trained):
    a = lm.compress_model(trained, 256, 1.0).cmap.stats()["memory_bits"]
    b = lm.compress_model(trained, 256, 1e-4).cmap.stats()["memory_bits"]
    assert a < b


def test_model_smaller_than_tsv_baseline():
    weights = {f"C{i % 5}\x1ffeat number {i:07d}": (i % 13 - 6) / 7 or 0.1 for i in range(100_000)}
    src = lm.SourceModel([f"C{i}" for i in range(5)], weights)
    stats = lm.compress_model(src, 256, 1e-4).cmap.stats(
        avg_key_bytes=np.mean([len(k.encode()) for k in weights]))
    assert stats["fold_reduction"] >= 8


def test_score_error_bound_without_false_positives(trained, intents):
    comp = lm.compress_model(trained, 64, 1e-4)
    half = comp.cmap.table.step / 2
    checked = 0
    for _, text in intents[1][:300]:
        fv = lm.extract_features(text)
        feats = sorted(fv)
        keys = [lm.composite_key(c, f).encode() for c in trained.classes for f in feats]
        _, src_present = trained.weights_for(keys)
        _, comp_present = comp.weights_for(keys)
        if np.any(comp_present & ~src_present):
            continue  # a false positive fired
        active = src_present.reshape(len(trained.classes), len(feats)).sum(axis=1)
        diff = np.abs(lm.score(comp, fv) - lm.score(trained, fv))
        assert np.all(diff <= active * half + 1e-9)
        checked += 1
    assert checked > 250


def test_argmax_invariant_when_step_below_gap(trained, intents):
    texts = [t for _, t in intents[1][:400]]
    scores = lm.score_many(trained, texts)
    top2 = np.sort(scores, axis=1)[:, -2:]
    gap = float((top2[:, 1] - top2[:, 0]).min())
    max_active = max(len(lm.extract_features(t)) for t in texts)
    assert gap > 0
    spread = max(trained.weights.values()) - min(trained.weights.values())
    # step = spread / (k - 1) must fall below gap / (2 * max_active)
    k = math.ceil(spread * 2 * max_active / gap) + 2
    comp = lm.compress_model(trained, k, 2.0 ** -40)
    assert comp.cmap.table.step < gap / (2 * max_active)
    assert lm.predict_many(comp, texts) == lm.predict_many(trained, texts)


def test_train_toy_separable():
    trainer = lm.SgdTrainer(epochs=50, lr=0.5, seed=1)
    model = trainer.fit(TOY)
    assert model.classes == ["Music", "Weather"]
    assert lm.accuracy(model, TOY) == 1.0
    losses = trainer.epoch_losses
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_train_loss_non_increasing(intents):
    trainer = lm.SgdTrainer(epochs=6, lr=0.1, seed=3)
    trainer.fit(intents[0])
    losses = trainer.epoch_losses
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_l1_yields_fewer_weights(intents):
    dense = lm.train_sgd(intents[0], epochs=3, seed=2)
    sparse = lm.train_sgd(intents[0], epochs=3, seed=2, l1=1e-4)
    assert len(sparse.weights) <= len(dense.weights)
    assert len(sparse.weights) < len(dense.weights)


def test_training_deterministic(intents):
    a = lm.train_sgd(intents[0][:500], epochs=2, seed=9)
    b = lm.train_sgd(intents[0][:500], epochs=2, seed=9)
    assert a.weights == b.weights and a.biases == b.biases


def test_training_rejects_one_class():
    with pytest.raises(ValueError):
        lm.train_sgd([("A", "x"), ("A", "y")])


def test_self_agreement(trained, intents):
    r = lm.evaluate_agreement(trained, trained, intents[1])
    assert r.agreement_rate == 1.0
    assert r.relative_error_increase == 0.0
    assert r.n_utterances == len(intents[1])
    assert r.src_accuracy == r.comp_accuracy


def test_near_lossless_agreement(trained, intents):
    comp = lm.compress_model(trained, 2**20, 1e-6)
    r = lm.evaluate_agreement(trained, comp, intents[1])
    assert r.agreement_rate >= 0.999


def test_class_mismatch_rejected(trained, intents):
    other = lm.SourceModel(list(reversed(trained.classes)), {})
    with pytest.raises(ValueError):
        lm.evaluate_agreement(trained, other, intents[1])


def test_no_fingerprint_agrees_less_often():
    rates = {1.0: [], 1e-4: []}
    for seed in range(3):
        train, test = intent_split(2000, 1000, n_classes=4, seed=seed)
        src = lm.train_sgd(train, epochs=4, seed=seed)
        for eps in rates:
            comp = lm.compress_model(src, 256, eps)
            rates[eps].append(lm.evaluate_agreement(src, comp, test).agreement_rate)
    assert statistics.median(rates[1.0]) <= statistics.median(rates[1e-4])


def test_report_is_deterministic(trained, intents):
    comp = lm.compress_model(trained, 256, 1.0)
    a = lm.evaluate_agreement(trained, comp, intents[1])
    b = lm.evaluate_agreement(trained, comp, intents[1])
    assert a == b
