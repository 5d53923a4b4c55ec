"""Synthetic corpora shared by the test modules."""

from __future__ import annotations

import random

import numpy as np

from issuetagger.classifier import EmbeddingTable, Model, TrainConfig, Vocabulary
from issuetagger.dataset import Dataset, LabeledIssue
from issuetagger.text import FeatureBag

# disjoint per-class vocabularies: a linear separator exists by construction
CLASS_WORDS = {
    "bug": ["crash", "crashes", "error", "exception", "segfault", "traceback", "broken",
            "regression", "panic", "failure", "stacktrace", "corrupt"],
    "enhancement": ["feature", "support", "option", "proposal", "improve", "allow",
                    "configurable", "plugin", "extend", "roadmap", "nice", "add"],
    "question": ["how", "why", "wondering", "clarify", "documentation", "example",
                 "explain", "possible", "help", "understand", "anyone", "usage"],
}
LABELS = ("bug", "enhancement", "question")


def separable_issues(n: int = 300, seed: int = 7, words: int = 12) -> Dataset:
    rng = random.Random(seed)
    issues = []
    for i in range(n):
        label = LABELS[i % 3]
        vocab = CLASS_WORDS[label]
        title = " ".join(rng.choice(vocab) for _ in range(3))
        body = " ".join(rng.choice(vocab) for _ in range(words))
        issues.append(LabeledIssue(f"s{i:04d}", title, body, label))
    return Dataset(tuple(issues), f"separable(n={n}, seed={seed})")


def separable_corpus(n: int = 300, seed: int = 7) -> list[tuple[list[str], str]]:
    return [(x.tokens(), x.label) for x in separable_issues(n, seed)]


def dense_model(dim=8, n_feats=20, n_labels=3, seed=3, loss_mode="flat_softmax", scale=0.5):
    """Model with float64 random A and B, no hashed features."""
    rng = np.random.default_rng(seed)
    vocab = Vocabulary.from_counts({f"w{i:02d}": 1 for i in range(n_feats)}, 1)
    config = TrainConfig(dim=dim, min_count=1, char_ngram_max=0, hashing_buckets=0,
                         loss_mode=loss_mode, seed=seed)
    A = EmbeddingTable(n_feats, dim, seed, np.arange(n_feats), rng.normal(0, scale, (n_feats, dim)))
    B = rng.normal(0, scale, (dim, n_labels))
    labels = tuple(f"l{i}" for i in range(n_labels))
    return Model(labels, vocab, A, B, config, tuple(range(1, n_labels + 1)))


def random_bags(n, n_feats=20, seed=0, max_feats=6):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        k = int(rng.integers(1, max_feats + 1))
        ids = rng.choice(n_feats, size=k, replace=False)
        out.append((FeatureBag({int(i): int(rng.integers(1, 4)) for i in ids}), int(rng.integers(0, 3))))
    return out
