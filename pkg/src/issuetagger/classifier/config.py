from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Literal

LossMode = Literal["flat_softmax", "hierarchical_softmax"]
LOSS_MODES = ("flat_softmax", "hierarchical_softmax")


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters. Defaults are the fastText supervised defaults except
    for the vocabulary threshold (14) and explicit subword settings."""

    dim: int = 100
    epochs: int = 5
    learning_rate: float = 0.1
    min_count: int = 14
    word_ngrams: int = 1
    char_ngram_min: int = 3
    char_ngram_max: int = 6
    hashing_buckets: int = 2_000_000
    loss_mode: LossMode = "flat_softmax"
    seed: int = 42

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")
        if self.word_ngrams < 1:
            raise ValueError("word_ngrams must be >= 1")
        if self.char_ngram_max != 0 and not 1 <= self.char_ngram_min <= self.char_ngram_max:
            raise ValueError("need 1 <= char_ngram_min <= char_ngram_max (or char_ngram_max = 0)")
        if self.hashing_buckets < 0:
            raise ValueError("hashing_buckets must be >= 0")
        if self.hashed_features and self.hashing_buckets == 0:
            raise ValueError("hashing_buckets must be > 0 when subwords or word n-grams are on")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}")

    @property
    def subwords(self) -> bool:
        return self.char_ngram_max > 0

    @property
    def hashed_features(self) -> bool:
        return self.subwords or self.word_ngrams > 1

    @property
    def effective_buckets(self) -> int:
        # no hashed features -> no bucket rows at all
        return self.hashing_buckets if self.hashed_features else 0

    @classmethod
    def compact(cls, **overrides: Any) -> "TrainConfig":
        """Disk-constrained deployment preset: no subwords, no word n-grams, min_count 14."""
        base = dict(min_count=14, word_ngrams=1, char_ngram_max=0, hashing_buckets=0)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def replace(self, **changes: Any) -> "TrainConfig":
        return replace(self, **changes)
