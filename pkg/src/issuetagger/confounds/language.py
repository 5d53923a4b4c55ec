"""Character-set + trigram language identification.

1. Letters are bucketed by Unicode script; only profiles written in the
   text's dominant script stay candidates.
2. The text's trigrams (lowercased, non-letters collapsed to single spaces,
   padded with a space on each side) are ranked by frequency, ties broken by
   code point order, and cut to the top ``PROFILE_SIZE``.
3. Each candidate gets the out-of-place distance: for every text trigram,
   ``|text rank - profile rank|``, or ``MAX_PENALTY`` when the profile lacks it.

Confidence is the distance margin to the runner-up divided by the largest
possible distance; a lone candidate is scored against that maximum instead.

Profile files are UTF-8: ``#``-prefixed header lines (``language``,
``script``, ``source``) followed by one ``<trigram>\\t<rank>`` line per trigram.
"""

from __future__ import annotations

import os
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

PROFILE_SIZE = 300
MAX_PENALTY = 300
MIN_LETTERS = 10
UNDETERMINED = ("und", 0.0)

_NON_LETTER = re.compile(r"[^\w]|[\d_]+")
_SPACES = re.compile(r"\s+")


@dataclass(frozen=True)
class LanguageProfile:
    language_tag: str
    script: str
    trigram_ranks: dict[str, int] = field(default_factory=dict)
    source: str = ""

    def __post_init__(self) -> None:
        if sorted(self.trigram_ranks.values()) != list(range(len(self.trigram_ranks))):
            raise ValueError(f"{self.language_tag}: ranks must be dense from 0")
        if len(self.trigram_ranks) > PROFILE_SIZE:
            raise ValueError(f"{self.language_tag}: more than {PROFILE_SIZE} trigrams")


def script_of(ch: str) -> str | None:
    if not ch.isalpha():
        return None
    try:
        name = unicodedata.name(ch)
    except ValueError:
        return None
    head = name.split(" ", 1)[0]
    if head == "CJK":
        return "Han"
    return head.capitalize()


def dominant_script(text: str) -> tuple[str | None, int]:
    """Most common script among the letters, and the letter count."""
    counts = Counter(s for s in map(script_of, text) if s is not None)
    if not counts:
        return None, 0
    script, _ = max(counts.items(), key=lambda kv: (kv[1], kv[0]))
    return script, sum(counts.values())


def clean(text: str) -> str:
    text = unicodedata.normalize("NFC", text).lower()
    text = _NON_LETTER.sub(" ", text)
    return _SPACES.sub(" ", text).strip()


def trigram_ranking(text: str, limit: int = PROFILE_SIZE) -> dict[str, int]:
    padded = f" {clean(text)} "
    counts = Counter(padded[i : i + 3] for i in range(len(padded) - 2))
    counts.pop("   ", None)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:limit]
    return {tri: rank for rank, (tri, _) in enumerate(ordered)}


def build_profile(language_tag: str, script: str, texts: Iterable[str], source: str = "") -> LanguageProfile:
    # paragraphs are joined by a space so trigrams never straddle two of them unmarked
    return LanguageProfile(language_tag, script, trigram_ranking(" ".join(texts)), source)


def out_of_place(text_ranks: dict[str, int], profile: LanguageProfile) -> int:
    ranks = profile.trigram_ranks
    return sum(abs(r - ranks[t]) if t in ranks else MAX_PENALTY for t, r in text_ranks.items())


def detect_language(text: str, profiles: Sequence[LanguageProfile]) -> tuple[str, float]:
    if not profiles:
        raise ValueError("need at least one language profile")
    script, letters = dominant_script(text)
    if letters < MIN_LETTERS:
        return UNDETERMINED
    candidates = [p for p in profiles if p.script == script]
    if not candidates:
        return UNDETERMINED
    ranks = trigram_ranking(text)
    worst = MAX_PENALTY * len(ranks)
    scored = sorted(((out_of_place(ranks, p), p.language_tag) for p in candidates))
    best_d, best_tag = scored[0]
    if len(scored) == 1:
        confidence = 1.0 - best_d / worst
    else:
        confidence = (scored[1][0] - best_d) / worst
    return best_tag, min(max(confidence, 0.0), 1.0)


def write_profile(profile: LanguageProfile, path: str | os.PathLike) -> None:
    lines = [f"# language: {profile.language_tag}", f"# script: {profile.script}",
             f"# source: {profile.source}"]
    lines += [f"{t}\t{r}" for t, r in sorted(profile.trigram_ranks.items(), key=lambda kv: kv[1])]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_header(lines: Iterable[str]) -> dict[str, str]:
    meta = {}
    for line in lines:
        if line.startswith("#") and ":" in line:
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
    return meta


def parse_profile(text: str) -> LanguageProfile:
    lines = text.splitlines()
    meta = _parse_header(l for l in lines if l.startswith("#"))
    if "language" not in meta or "script" not in meta:
        raise ValueError("profile header must name language and script")
    ranks = {}
    for line in lines:
        if not line or line.startswith("#"):
            continue
        tri, _, rank = line.rpartition("\t")
        ranks[tri] = int(rank)
    return LanguageProfile(meta["language"], meta["script"], ranks, meta.get("source", ""))


def read_profile(path: str | os.PathLike) -> LanguageProfile:
    return parse_profile(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class Corpus:
    """A bundled language corpus: profile paragraphs plus held-out paragraphs."""

    language_tag: str
    script: str
    source: str
    train: tuple[str, ...]
    held_out: tuple[str, ...]


def parse_corpus(text: str) -> Corpus:
    lines = text.splitlines()
    meta = _parse_header(l for l in lines if l.startswith("# "))
    train: list[str] = []
    held: list[str] = []
    target = train
    for line in lines:
        if line.strip() == "## held-out":
            target = held
        elif line.strip() and not line.startswith("#"):
            target.append(line.strip())
    return Corpus(meta["language"], meta["script"], meta.get("source", ""), tuple(train), tuple(held))


def bundled_corpora() -> list[Corpus]:
    root = resources.files("issuetagger.confounds") / "data" / "corpora"
    return [parse_corpus(p.read_text(encoding="utf-8"))
            for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".txt")]


def profile_from_corpus(corpus: Corpus) -> LanguageProfile:
    return build_profile(corpus.language_tag, corpus.script, corpus.train,
                         f"bundled corpus {corpus.language_tag}.txt ({corpus.source})")


@lru_cache(maxsize=1)
def default_profiles() -> tuple[LanguageProfile, ...]:
    root = resources.files("issuetagger.confounds") / "data"
    return tuple(parse_profile(p.read_text(encoding="utf-8"))
                 for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".tsv"))
