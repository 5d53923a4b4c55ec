from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np

from ..rng import SplitMix64, derive_seed
from .config import TrainConfig
from .model import EmbeddingTable, Model, softmax
from .vocab import build_vocabulary

log = logging.getLogger(__name__)

EpochCallback = Callable[[int, Model], None]


class TrainingError(ValueError):
    pass


def train(
    corpus: Sequence[tuple[Sequence[str], str]],
    config: TrainConfig,
    labels: Sequence[str] | None = None,
    on_epoch: EpochCallback | None = None,
) -> Model:
    """Fit the model by per-example SGD on the mean negative log-likelihood.

    ``corpus`` holds ``(tokens, label)`` pairs.  Label order defaults to first
    appearance in the corpus; pass ``labels`` to fix it.  A is initialised
    uniformly in ``[-1/dim, 1/dim]`` from ``config.seed``, B starts at zero, and
    the learning rate decays linearly from ``config.learning_rate`` to 0 over
    ``epochs * len(corpus)`` updates.  The example order of every epoch is a
    seeded shuffle.  ``on_epoch(epoch, model)`` sees the model after each epoch.
    """
    if not corpus:
        raise TrainingError("cannot train on an empty corpus")
    if labels is None:
        labels = list(dict.fromkeys(label for _, label in corpus))
    labels = tuple(labels)
    index = {lab: i for i, lab in enumerate(labels)}
    unknown = sorted({lab for _, lab in corpus if lab not in index})
    if unknown:
        raise TrainingError(f"unknown labels in corpus: {unknown}")
    y = np.array([index[lab] for _, lab in corpus], dtype=np.int64)
    label_counts = tuple(int(c) for c in np.bincount(y, minlength=len(labels)))
    missing = [lab for lab, c in zip(labels, label_counts) if c == 0]
    if missing:
        raise TrainingError(f"labels without training examples: {missing}")

    vocab = build_vocabulary((tokens for tokens, _ in corpus), config.min_count)
    num_rows = len(vocab) + config.effective_buckets
    placeholder = EmbeddingTable(num_rows, config.dim, config.seed, np.zeros(0, np.int64),
                                 np.zeros((0, config.dim), np.float32))
    model = Model(labels, vocab, placeholder,
                  np.zeros((config.dim, len(labels)), dtype=np.float32), config, label_counts)

    bags = [model.featurize(tokens) for tokens, _ in corpus]
    docs = [bag.arrays() for bag in bags]
    seen = np.unique(np.concatenate([ids for ids, _ in docs])) if docs else np.zeros(0, np.int64)
    model.A = EmbeddingTable.initial(num_rows, config.dim, config.seed, seen)
    W, B = model.A.weights, model.B
    # per document: row slots in W and normalised occurrence weights
    compiled = []
    for ids, counts in docs:
        slots = np.searchsorted(model.A.ids, ids)
        weights = counts / counts.sum() if len(ids) else counts
        compiled.append((slots, weights))

    log.info("training: %d docs, %d labels, vocab %d, %d rows materialised",
             len(corpus), len(labels), len(vocab), len(seen))
    total = config.epochs * len(corpus)
    step = 0
    lr0 = config.learning_rate
    for epoch in range(config.epochs):
        order = list(range(len(corpus)))
        SplitMix64(derive_seed(config.seed, "epoch", epoch)).shuffle(order)
        for i in order:
            lr = lr0 * (1.0 - step / total)
            step += 1
            slots, weights = compiled[i]
            if len(slots):
                h = weights @ W[slots].astype(np.float64)
            else:
                h = np.zeros(config.dim)
            delta = softmax(h @ B.astype(np.float64))
            delta[y[i]] -= 1.0
            grad_h = B.astype(np.float64) @ delta
            B -= (lr * np.outer(h, delta)).astype(B.dtype)
            if len(slots):
                W[slots] -= (lr * np.outer(weights, grad_h)).astype(W.dtype)
        if on_epoch is not None:
            on_epoch(epoch, model)
    W.flags.writeable = False
    B.flags.writeable = False
    return model
