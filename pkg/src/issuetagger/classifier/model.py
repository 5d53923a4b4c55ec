"""Linear bag-of-features model: hidden = mean(A[x]), logits = B^T hidden, p = f(logits)."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..rng import splitmix64_stream, unit_floats
from ..text import FeatureBag
from .config import TrainConfig
from .vocab import Vocabulary


class EmbeddingTable:
    """Input matrix A of shape ``(num_rows, dim)``, stored sparsely.

    Only rows that appeared in training are held in memory.  Every other row
    still has a well-defined value: its initialisation

        A[r, c] = (2 * u(r * dim + c) - 1) / dim

    where ``u(k)`` is the k-th unit float of the ``SplitMix64(seed)`` stream.
    Since untouched rows never change, regenerating them is exact.
    """

    def __init__(self, num_rows: int, dim: int, seed: int, ids: np.ndarray, weights: np.ndarray):
        ids = np.asarray(ids, dtype=np.int64)
        if weights.shape != (len(ids), dim):
            raise ValueError(f"weights shape {weights.shape} != ({len(ids)}, {dim})")
        if len(ids) and (np.any(np.diff(ids) <= 0) or ids[0] < 0 or ids[-1] >= num_rows):
            raise ValueError("row ids must be strictly increasing and within range")
        self.num_rows = num_rows
        self.dim = dim
        self.seed = seed
        self.ids = ids
        self.weights = weights

    @classmethod
    def initial(cls, num_rows: int, dim: int, seed: int, ids: np.ndarray,
                dtype: type = np.float32) -> "EmbeddingTable":
        ids = np.unique(np.asarray(ids, dtype=np.int64))
        return cls(num_rows, dim, seed, ids, init_rows(seed, dim, ids).astype(dtype))

    @property
    def shape(self) -> tuple[int, int]:
        return self.num_rows, self.dim

    def slots(self, ids: np.ndarray) -> np.ndarray:
        """Position of each id in ``self.ids``, -1 where the row is not stored."""
        if len(self.ids) == 0:
            return np.full(len(ids), -1, dtype=np.int64)
        pos = np.minimum(np.searchsorted(self.ids, ids), len(self.ids) - 1)
        return np.where(self.ids[pos] == ids, pos, -1)

    def lookup(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if len(ids) and (ids.min() < 0 or ids.max() >= self.num_rows):
            raise IndexError("feature id outside the embedding table")
        slots = self.slots(ids)
        out = np.empty((len(ids), self.dim), dtype=np.float64)
        hit = slots >= 0
        out[hit] = self.weights[slots[hit]]
        if not hit.all():
            out[~hit] = init_rows(self.seed, self.dim, ids[~hit]).astype(self.weights.dtype)
        return out

    def dense(self) -> np.ndarray:
        return self.lookup(np.arange(self.num_rows))

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.num_rows, self.dim, self.seed, self.ids.copy(), self.weights.copy())


def init_rows(seed: int, dim: int, ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.uint64)
    counters = ids[:, None] * np.uint64(dim) + np.arange(dim, dtype=np.uint64)[None, :]
    return (2.0 * unit_floats(splitmix64_stream(seed, counters)) - 1.0) / dim


class HuffmanTree:
    """Binary tree over labels built from label frequencies.

    With ``n`` labels there are ``n - 1`` internal nodes.  ``paths[leaf]`` lists
    the (internal node, branch) pairs from the root down to the leaf, branch 0
    meaning "left".
    """

    def __init__(self, counts: Sequence[int]):
        n = len(counts)
        if n == 0:
            raise ValueError("need at least one label")
        heap = [(int(c), i, i) for i, c in enumerate(counts)]
        heapq.heapify(heap)
        self.children: dict[int, tuple[int, int]] = {}
        next_id = n
        while len(heap) > 1:
            c1, _, a = heapq.heappop(heap)
            c2, _, b = heapq.heappop(heap)
            self.children[next_id] = (a, b)
            heapq.heappush(heap, (c1 + c2, next_id, next_id))
            next_id += 1
        self.root = heap[0][2]
        self.n_labels = n
        self.leaves: dict[int, list[int]] = {}
        self.paths: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        self._walk(self.root, [])

    def _walk(self, node: int, path: list[tuple[int, int]]) -> list[int]:
        if node < self.n_labels:
            self.paths[node] = list(path)
            return [node]
        left, right = self.children[node]
        under = self._walk(left, path + [(node, 0)]) + self._walk(right, path + [(node, 1)])
        self.leaves[node] = under
        return under

    def log_probs(self, logits: np.ndarray) -> np.ndarray:
        """Leaf log-probabilities as a product of binary branch decisions.

        Each internal node branches left with probability
        ``sigmoid(lse(left leaves) - lse(right leaves))``, which makes the
        product over a root-to-leaf path exactly the flat softmax.
        """
        if self.n_labels == 1:
            return np.zeros(1)
        lse = {}
        for node, under in self.leaves.items():
            lse[node] = _logsumexp(logits[under])
        for leaf in range(self.n_labels):
            lse[leaf] = float(logits[leaf])
        out = np.zeros(self.n_labels)
        for leaf, path in enumerate(self.paths):
            total = 0.0
            for node, branch in path:
                left, right = self.children[node]
                margin = lse[left] - lse[right]
                total += _log_sigmoid(margin if branch == 0 else -margin)
            out[leaf] = total
        return out


def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + float(np.log(np.sum(np.exp(x - m))))


def _log_sigmoid(x: float) -> float:
    return -np.logaddexp(0.0, -x)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class Model:
    labels: tuple[str, ...]
    vocab: Vocabulary
    A: EmbeddingTable
    B: np.ndarray  # (dim, n_labels)
    config: TrainConfig
    label_counts: tuple[int, ...] = ()
    _tree: HuffmanTree | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.labels = tuple(self.labels)
        if not self.labels or len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be nonempty and unique")
        if self.B.shape != (self.A.dim, len(self.labels)):
            raise ValueError(f"B shape {self.B.shape} does not match dim {self.A.dim} x {len(self.labels)} labels")
        if self.config.dim != self.A.dim:
            raise ValueError(f"config dim {self.config.dim} != embedding dim {self.A.dim}")
        if self.A.num_rows != len(self.vocab) + self.config.effective_buckets:
            raise ValueError("A row count must equal vocabulary size + hashing buckets")
        if not self.label_counts:
            self.label_counts = (1,) * len(self.labels)

    @property
    def dim(self) -> int:
        return self.A.dim

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @property
    def tree(self) -> HuffmanTree:
        if self._tree is None:
            self._tree = HuffmanTree(self.label_counts)
        return self._tree

    def label_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown label {label!r}; model labels are {list(self.labels)}") from None

    def featurize(self, tokens: Sequence[str]) -> FeatureBag:
        from ..text import featurize

        cfg = self.config
        return featurize(tokens, self.vocab, cfg.effective_buckets,
                         cfg.char_ngram_min, cfg.char_ngram_max, cfg.word_ngrams)


@dataclass(frozen=True)
class Prediction:
    labels: tuple[str, ...]
    probs: np.ndarray

    @property
    def scores(self) -> dict[str, float]:
        return {lab: float(p) for lab, p in zip(self.labels, self.probs)}

    @property
    def argmax_index(self) -> int:
        # np.argmax returns the first maximum: ties go to the lowest label index
        return int(np.argmax(self.probs))

    @property
    def argmax_label(self) -> str:
        return self.labels[self.argmax_index]

    @property
    def top_score(self) -> float:
        return float(self.probs[self.argmax_index])


def hidden(bag: FeatureBag, model: Model) -> np.ndarray:
    ids, counts = bag.arrays()
    if len(ids) == 0:
        return np.zeros(model.dim)
    return (counts / counts.sum()) @ model.A.lookup(ids)


def logits(bag: FeatureBag, model: Model) -> np.ndarray:
    return hidden(bag, model) @ model.B.astype(np.float64)


def probabilities(z: np.ndarray, model: Model) -> np.ndarray:
    if model.config.loss_mode == "hierarchical_softmax":
        return np.exp(model.tree.log_probs(z))
    return softmax(z)


def forward(bag: FeatureBag, model: Model) -> Prediction:
    return Prediction(model.labels, probabilities(logits(bag, model), model))


def example_nll(bag: FeatureBag, label: int, model: Model) -> float:
    z = logits(bag, model)
    if model.config.loss_mode == "hierarchical_softmax":
        return float(-model.tree.log_probs(z)[label])
    return float(-log_softmax(z)[label])


def loss(dataset: Sequence[tuple[FeatureBag, int]], model: Model) -> float:
    """Mean negative log-likelihood of the gold labels."""
    if not dataset:
        return 0.0
    for _, y in dataset:
        if not 0 <= y < model.n_labels:
            raise ValueError(f"label id {y} out of range")
    return float(np.mean([example_nll(bag, y, model) for bag, y in dataset]))


def gradients(
    dataset: Sequence[tuple[FeatureBag, int]], model: Model
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradient of ``loss`` with respect to A and B.

    Returns ``(row_ids, grad_rows, grad_B)`` where ``grad_rows[i]`` is the
    gradient for ``A[row_ids[i]]``; rows not listed have zero gradient.
    """
    n = len(dataset)
    B = model.B.astype(np.float64)
    grad_B = np.zeros_like(B)
    acc: dict[int, np.ndarray] = {}
    for bag, y in dataset:
        ids, counts = bag.arrays()
        weights = counts / counts.sum() if len(ids) else counts
        h = weights @ model.A.lookup(ids) if len(ids) else np.zeros(model.dim)
        delta = softmax(h @ B)
        delta[y] -= 1.0
        grad_B += np.outer(h, delta) / n
        grad_h = B @ delta / n
        for i, w in zip(ids.tolist(), weights.tolist()):
            g = acc.get(i)
            acc[i] = w * grad_h if g is None else g + w * grad_h
    row_ids = np.array(sorted(acc), dtype=np.int64)
    grad_rows = np.array([acc[i] for i in row_ids.tolist()]).reshape(len(row_ids), model.dim)
    return row_ids, grad_rows, grad_B


def predict_text(text: str, model: Model) -> Prediction:
    from ..text import tokenize

    return forward(model.featurize(tokenize(text)), model)
