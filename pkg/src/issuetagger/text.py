"""Issue text to sparse feature bags.

Pipeline: ``concatenate`` (title + body) -> ``tokenize`` -> ``featurize``.
Feature ids are laid out as::

    [0, nwords)                    in-vocabulary word ids
    [nwords, nwords + buckets)     hashed character n-grams (and word n-grams)

Hashed features use 64-bit FNV-1a over the UTF-8 bytes of the n-gram string
(offset basis 0xcbf29ce484222325, prime 0x100000001b3) reduced modulo the
bucket count.
"""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Protocol, Sequence

import numpy as np

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

BOW = "<"
EOW = ">"

_NON_ALNUM = re.compile(r"[\W_]+")


@dataclass(frozen=True)
class RawIssue:
    title: str
    body: str = ""


@dataclass(frozen=True)
class FeatureBag:
    """Order-free multiset of feature ids for one document."""

    entries: Mapping[int, int] = field(default_factory=dict)
    token_count: int = 0

    def __post_init__(self) -> None:
        if any(c < 1 for c in self.entries.values()):
            raise ValueError("feature counts must be positive")

    def __len__(self) -> int:
        return len(self.entries)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted ids and their counts, as ``int64`` / ``float64`` arrays."""
        if not self.entries:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64)
        ids = np.fromiter(sorted(self.entries), dtype=np.int64, count=len(self.entries))
        counts = np.array([self.entries[i] for i in ids.tolist()], dtype=np.float64)
        return ids, counts


class _Vocab(Protocol):
    word_to_id: Mapping[str, int]

    def __len__(self) -> int: ...


def concatenate(issue: RawIssue) -> str:
    if not issue.body:
        return issue.title
    if not issue.title:
        return issue.body
    return f"{issue.title} {issue.body}"


def tokenize(text: str) -> list[str]:
    """NFC-normalise, lowercase, turn every non-alphanumeric run into a space, split."""
    text = unicodedata.normalize("NFC", text).lower()
    return _NON_ALNUM.sub(" ", text).split()


def char_ngrams(token: str, min_n: int, max_n: int) -> list[str]:
    """Character n-grams of ``<token>``, followed by the whole wrapped token.

    The wrapped token itself is always the last element and is not repeated
    among the n-grams when ``min_n <= len(wrapped) <= max_n``.
    """
    if not 1 <= min_n <= max_n:
        raise ValueError(f"need 1 <= min_n <= max_n, got {min_n}, {max_n}")
    wrapped = BOW + token + EOW
    size = len(wrapped)
    out = []
    for n in range(min_n, min(max_n, size - 1) + 1):
        for i in range(size - n + 1):
            out.append(wrapped[i : i + n])
    out.append(wrapped)
    return out


def fnv1a_64(text: str) -> int:
    h = FNV64_OFFSET
    for b in text.encode("utf-8"):
        h = ((h ^ b) * FNV64_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 18)
def _subword_hashes(token: str, min_n: int, max_n: int) -> tuple[int, ...]:
    return tuple(fnv1a_64(g) for g in char_ngrams(token, min_n, max_n))


def featurize(
    tokens: Sequence[str],
    vocab: _Vocab,
    hashing_buckets: int,
    min_n: int = 3,
    max_n: int = 6,
    word_ngrams: int = 1,
) -> FeatureBag:
    """Bag of word ids plus hashed subword (and optional word n-gram) buckets.

    ``max_n == 0`` disables character n-grams; ``hashing_buckets`` may then be
    0 as long as ``word_ngrams == 1``.
    """
    subwords = max_n > 0
    if hashing_buckets < 0 or (hashing_buckets == 0 and (subwords or word_ngrams > 1)):
        raise ValueError("hashing_buckets must be positive when hashed features are enabled")
    nwords = len(vocab)
    word_to_id = vocab.word_to_id
    counts: Counter[int] = Counter()
    contributing = 0
    for tok in tokens:
        emitted = False
        wid = word_to_id.get(tok)
        if wid is not None:
            counts[wid] += 1
            emitted = True
        if subwords:
            for h in _subword_hashes(tok, min_n, max_n):
                counts[nwords + h % hashing_buckets] += 1
            emitted = True
        contributing += emitted
    if word_ngrams > 1:
        for i in range(len(tokens)):
            for n in range(2, word_ngrams + 1):
                if i + n > len(tokens):
                    break
                h = fnv1a_64(" ".join(tokens[i : i + n]))
                counts[nwords + h % hashing_buckets] += 1
    return FeatureBag(entries=dict(counts), token_count=contributing)
