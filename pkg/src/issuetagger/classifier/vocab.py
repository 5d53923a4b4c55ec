from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence


@dataclass
class Vocabulary:
    """Words kept after frequency pruning, with dense ids.

    Ids follow descending corpus frequency, ties broken lexicographically.
    """

    word_to_id: dict[str, int] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    min_count: int = 1

    def __len__(self) -> int:
        return len(self.word_to_id)

    def __contains__(self, word: object) -> bool:
        return word in self.word_to_id

    @property
    def words(self) -> list[str]:
        return sorted(self.word_to_id, key=self.word_to_id.__getitem__)

    @classmethod
    def from_counts(cls, counts: dict[str, int], min_count: int) -> "Vocabulary":
        kept = sorted(
            ((w, c) for w, c in counts.items() if c >= min_count),
            key=lambda wc: (-wc[1], wc[0]),
        )
        return cls(
            word_to_id={w: i for i, (w, _) in enumerate(kept)},
            counts=dict(kept),
            min_count=min_count,
        )


def build_vocabulary(corpus: Iterable[Sequence[str]], min_count: int) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for tokens in corpus:
        counts.update(tokens)
    return Vocabulary.from_counts(dict(counts), min_count)
