import math
import struct

import numpy as np
import pytest
from synthetic import LABELS, dense_model, random_bags, separable_corpus

from issuetagger.classifier import (
    BadMagicError,
    EmbeddingTable,
    HuffmanTree,
    Model,
    ModelFormatError,
    TrainConfig,
    TrainingError,
    TruncatedPayloadError,
    UnsupportedVersionError,
    Vocabulary,
    build_vocabulary,
    dumps,
    fingerprint,
    forward,
    gradients,
    load,
    loads,
    loss,
    predict_text,
    save,
    softmax,
    train,
)
from issuetagger.classifier.model import init_rows
from issuetagger.text import FeatureBag


# vocabulary

def test_vocabulary_threshold():
    corpus = [["bug"]] * 14 + [["xyz"]] * 13
    assert set(build_vocabulary(corpus, 14).word_to_id) == {"bug"}


def test_vocabulary_min_count_one_keeps_everything():
    corpus = [["a", "b"], ["c", "a"]]
    assert set(build_vocabulary(corpus, 1).word_to_id) == {"a", "b", "c"}
    assert len(build_vocabulary([], 1)) == 0


def test_vocabulary_ids_by_frequency_then_word():
    v = build_vocabulary([["b", "a", "c", "c"]], 1)
    assert v.words == ["c", "a", "b"]


# forward / loss

def test_zero_model_is_uniform():
    m = dense_model(dim=4, scale=0.0)
    pred = forward(FeatureBag({0: 1, 3: 2}), m)
    np.testing.assert_allclose(pred.probs, [1 / 3] * 3, atol=1e-12)
    assert pred.argmax_label == "l0"  # tie goes to the lowest index


def test_forward_by_hand_dim1():
    vocab = Vocabulary.from_counts({"p": 1, "q": 1}, 1)
    config = TrainConfig(dim=1, min_count=1, char_ngram_max=0, hashing_buckets=0)
    A = EmbeddingTable(2, 1, 0, np.arange(2), np.array([[0.5], [-1.0]]))
    B = np.array([[2.0, -1.0]])
    m = Model(("yes", "no"), vocab, A, B, config)
    # h = (0.5 * 1 - 1.0 * 3) / 4 = -0.625 ; logits = (-1.25, 0.625)
    p_yes = 1.0 / (1.0 + math.exp(0.625 + 1.25))
    pred = forward(FeatureBag({0: 1, 1: 3}), m)
    assert pred.scores["yes"] == pytest.approx(p_yes, abs=1e-9)
    assert pred.scores["no"] == pytest.approx(1 - p_yes, abs=1e-9)


def test_loss_uniform_is_ln3():
    m = dense_model(scale=0.0)
    assert loss(random_bags(10), m) == pytest.approx(math.log(3), abs=1e-12)


def test_loss_zero_when_certain():
    vocab = Vocabulary.from_counts({"a": 1, "b": 1, "c": 1}, 1)
    config = TrainConfig(dim=3, min_count=1, char_ngram_max=0, hashing_buckets=0)
    m = Model(LABELS, vocab, EmbeddingTable(3, 3, 0, np.arange(3), np.eye(3)), 1000 * np.eye(3), config)
    data = [(FeatureBag({y: 1}), y) for y in range(3)]
    assert loss(data, m) == pytest.approx(0.0, abs=1e-12)


def test_loss_matches_per_example_oracle():
    m = dense_model()
    data = random_bags(10, seed=5)
    A, B = m.A.dense(), m.B
    total = 0.0
    for bag, y in data:
        n = sum(bag.entries.values())
        h = [sum(A[i][c] * k for i, k in bag.entries.items()) / n for c in range(m.dim)]
        z = [sum(h[c] * B[c][j] for c in range(m.dim)) for j in range(3)]
        total += -(z[y] - math.log(sum(math.exp(v) for v in z)))
    assert loss(data, m) == pytest.approx(total / len(data), rel=1e-12)


def test_loss_rejects_bad_label():
    with pytest.raises(ValueError):
        loss([(FeatureBag({0: 1}), 7)], dense_model())


def _rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def test_gradients_match_finite_differences():
    m = dense_model()
    data = random_bags(12, seed=11)
    rows, grad_rows, grad_B = gradients(data, m)
    rng = np.random.default_rng(2)
    h = 1e-4
    W = m.A.weights
    for _ in range(15):
        k, c = int(rng.integers(len(rows))), int(rng.integers(m.dim))
        slot = int(np.searchsorted(m.A.ids, rows[k]))
        orig = W[slot, c]
        W[slot, c] = orig + h
        up = loss(data, m)
        W[slot, c] = orig - h
        down = loss(data, m)
        W[slot, c] = orig
        assert _rel_err(grad_rows[k, c], (up - down) / (2 * h)) < 1e-4
    for _ in range(15):
        c, j = int(rng.integers(m.dim)), int(rng.integers(3))
        orig = m.B[c, j]
        m.B[c, j] = orig + h
        up = loss(data, m)
        m.B[c, j] = orig - h
        down = loss(data, m)
        m.B[c, j] = orig
        assert _rel_err(grad_B[c, j], (up - down) / (2 * h)) < 1e-4


def test_unused_rows_have_no_gradient():
    m = dense_model()
    rows, _, _ = gradients([(FeatureBag({2: 1, 5: 1}), 0)], m)
    assert rows.tolist() == [2, 5]


@pytest.mark.parametrize("n_labels,counts", [(3, (5, 3, 9)), (3, (1, 1, 1)), (5, (10, 1, 7, 2, 2)), (2, (4, 1))])
def test_hierarchical_matches_flat(n_labels, counts):
    tree = HuffmanTree(counts)
    rng = np.random.default_rng(n_labels)
    for _ in range(200):
        z = rng.normal(0, 3, n_labels)
        np.testing.assert_allclose(np.exp(tree.log_probs(z)), softmax(z), atol=1e-6)


def test_hierarchical_model_forward_agrees():
    flat = dense_model()
    hs = dense_model(loss_mode="hierarchical_softmax")
    for bag, y in random_bags(50, seed=9):
        np.testing.assert_allclose(forward(bag, hs).probs, forward(bag, flat).probs, atol=1e-6)
    assert loss(random_bags(10), hs) == pytest.approx(loss(random_bags(10), flat), abs=1e-6)


def test_shift_invariance():
    rng = np.random.default_rng(4)
    tree = HuffmanTree((3, 1, 2))
    for _ in range(100):
        z = rng.normal(0, 2, 3)
        c = float(rng.normal(0, 50))
        np.testing.assert_allclose(softmax(z + c), softmax(z), atol=1e-9)
        np.testing.assert_allclose(tree.log_probs(z + c), tree.log_probs(z), atol=1e-9)
        assert np.argmax(softmax(z + c)) == np.argmax(softmax(z))


def test_probabilities_normalized():
    m = dense_model(scale=2.0)
    for bag, _ in random_bags(200, seed=1):
        p = forward(bag, m).probs
        assert abs(p.sum() - 1) < 1e-6
        assert np.all((p > 0) & (p < 1))


# embedding table

def test_untouched_rows_are_initial_values():
    ids = np.array([3, 10, 11])
    t = EmbeddingTable.initial(1000, 4, 9, ids, dtype=np.float64)
    probe = np.array([0, 3, 500, 11, 999])
    np.testing.assert_array_equal(t.lookup(probe), init_rows(9, 4, probe))
    assert np.all(np.abs(init_rows(9, 4, np.arange(1000))) <= 1 / 4)
    with pytest.raises(IndexError):
        t.lookup(np.array([1000]))


def test_init_rows_depend_only_on_seed_and_row():
    a = init_rows(1, 8, np.array([5, 6]))
    b = init_rows(1, 8, np.array([6]))
    np.testing.assert_array_equal(a[1], b[0])
    assert not np.array_equal(init_rows(2, 8, np.array([6])), b)


# training

FAST = TrainConfig(dim=16, epochs=5, min_count=1, char_ngram_max=0, hashing_buckets=0)


def test_training_separable_accuracy():
    corpus = separable_corpus()
    model = train(corpus, TrainConfig(), labels=LABELS)
    hits = sum(forward(model.featurize(t), model).argmax_label == y for t, y in corpus)
    assert hits / len(corpus) >= 0.99


def test_training_loss_decreases():
    corpus = separable_corpus()
    data = None
    seen = []

    def on_epoch(epoch, model):
        nonlocal data
        data = data or [(model.featurize(t), model.label_index(y)) for t, y in corpus]
        seen.append(loss(data, model))

    train(corpus, TrainConfig(epochs=5), labels=LABELS, on_epoch=on_epoch)
    assert len(seen) == 5
    assert seen[-1] < seen[0]
    assert all(b <= a + 1e-9 for a, b in zip(seen, seen[1:]))


def test_training_is_deterministic():
    corpus = separable_corpus(150)
    a = dumps(train(corpus, TrainConfig(), labels=LABELS))
    b = dumps(train(corpus, TrainConfig(), labels=LABELS))
    assert a == b
    c = dumps(train(corpus, TrainConfig(seed=43), labels=LABELS))
    assert a != c


def test_training_errors():
    with pytest.raises(TrainingError):
        train([], FAST)
    with pytest.raises(TrainingError):
        train([(["x"], "bug"), (["y"], "feature")], FAST, labels=LABELS)
    with pytest.raises(TrainingError):
        train([(["x"], "bug")], FAST, labels=LABELS)


def test_custom_labels():
    corpus = [(["red"] * 3, "warm"), (["blue"] * 3, "cold")] * 20
    model = train(corpus, FAST.replace(learning_rate=0.5, epochs=20))
    assert model.labels == ("warm", "cold")
    assert predict_text("blue blue", model).argmax_label == "cold"


def test_trained_model_is_read_only():
    model = train(separable_corpus(30), FAST, labels=LABELS)
    with pytest.raises(ValueError):
        model.B[0, 0] = 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(dim=0)
    with pytest.raises(ValueError):
        TrainConfig(hashing_buckets=0)
    with pytest.raises(ValueError):
        TrainConfig(loss_mode="ns")
    assert TrainConfig(char_ngram_max=0, hashing_buckets=0).effective_buckets == 0
    assert TrainConfig.compact().min_count == 14
    assert TrainConfig.from_dict(TrainConfig().to_dict()) == TrainConfig()
    assert TrainConfig(min_count=14).fingerprint() != TrainConfig(min_count=1).fingerprint()


# persistence

@pytest.fixture(scope="module")
def trained():
    return train(separable_corpus(120), TrainConfig(dim=20, min_count=1), labels=LABELS)


def test_save_load_round_trip(trained, tmp_path):
    path = tmp_path / "m.bin"
    size = save(trained, path)
    assert size == path.stat().st_size
    back = load(path)
    assert back.labels == trained.labels
    assert back.config == trained.config
    assert fingerprint(back) == fingerprint(trained)
    for text in ["crash traceback", "how to explain", "", "never seen words"]:
        np.testing.assert_array_equal(predict_text(text, back).probs, predict_text(text, trained).probs)


def test_load_zero_length(tmp_path):
    path = tmp_path / "empty.bin"
    path.write_bytes(b"")
    with pytest.raises(TruncatedPayloadError, match="truncated payload"):
        load(path)


def test_load_bad_magic(trained):
    data = bytearray(dumps(trained))
    data[:4] = b"NOPE"
    with pytest.raises(BadMagicError, match="bad magic"):
        loads(bytes(data))


def test_load_unknown_version(trained):
    data = bytearray(dumps(trained))
    data[4:6] = struct.pack("<H", 99)
    with pytest.raises(UnsupportedVersionError):
        loads(bytes(data))


@pytest.mark.parametrize("cut", [5, 10, 100, -1])
def test_load_truncated(trained, cut):
    with pytest.raises(TruncatedPayloadError):
        loads(dumps(trained)[:cut])


def test_load_trailing_bytes(trained):
    with pytest.raises(ModelFormatError):
        loads(dumps(trained) + b"\0")
