"""Labeled issue corpora: CSV ingest, balancing, stratified folds and exports.

CSV schema (RFC 4180, UTF-8, header required)::

    id,label,title,body

``label`` is one of ``bug``, ``enhancement``, ``question`` (any case) or empty
for unlabeled issues.  Several labels separated by ``,``, ``;`` or ``|`` mark a
multi-label issue; those rows are dropped with a warning.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from . import CANONICAL_LABELS
from .rng import SplitMix64, derive_seed
from .text import RawIssue, concatenate, tokenize

log = logging.getLogger(__name__)

CSV_FIELDS = ("id", "label", "title", "body")
_LABEL_SPLIT = re.compile(r"[,;|]")


class DatasetError(ValueError):
    pass


class CSVFormatError(DatasetError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class LabelValidationError(DatasetError):
    def __init__(self, rows: list[tuple[int, str]]):
        shown = ", ".join(f"row {n} ({raw!r})" for n, raw in rows[:20])
        more = f" and {len(rows) - 20} more" if len(rows) > 20 else ""
        super().__init__(f"unknown labels: {shown}{more}")
        self.rows = rows


class InsufficientDataError(DatasetError):
    pass


@dataclass(frozen=True)
class LabeledIssue:
    id: str
    title: str
    body: str = ""
    label: str | None = None
    source_repo: str | None = None

    def __post_init__(self) -> None:
        if self.label is not None and self.label not in CANONICAL_LABELS:
            raise ValueError(f"label must be one of {CANONICAL_LABELS}, got {self.label!r}")

    @property
    def text(self) -> str:
        return concatenate(RawIssue(self.title, self.body))

    def tokens(self) -> list[str]:
        return tokenize(self.text)


@dataclass(frozen=True)
class Dataset:
    issues: tuple[LabeledIssue, ...]
    provenance: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "issues", tuple(self.issues))
        dupes = [i for i, c in Counter(x.id for x in self.issues).items() if c > 1]
        if dupes:
            raise DatasetError(f"duplicate issue ids: {sorted(dupes)[:10]}")

    def __len__(self) -> int:
        return len(self.issues)

    def __iter__(self) -> Iterator[LabeledIssue]:
        return iter(self.issues)

    def class_counts(self) -> dict[str, int]:
        counts = Counter(x.label for x in self.issues if x.label is not None)
        return {lab: counts.get(lab, 0) for lab in CANONICAL_LABELS}

    def proportions(self) -> dict[str, float]:
        counts = self.class_counts()
        total = sum(counts.values())
        return {lab: (c / total if total else 0.0) for lab, c in counts.items()}

    def by_label(self) -> dict[str, list[LabeledIssue]]:
        groups: dict[str, list[LabeledIssue]] = {lab: [] for lab in CANONICAL_LABELS}
        for issue in self.issues:
            if issue.label is not None:
                groups[issue.label].append(issue)
        return groups

    def subset(self, ids: Iterable[str], provenance: str | None = None) -> "Dataset":
        wanted = set(ids)
        return Dataset(tuple(x for x in self.issues if x.id in wanted),
                       self.provenance if provenance is None else provenance)

    def require_labeled(self) -> None:
        unlabeled = [x.id for x in self.issues if x.label is None]
        if unlabeled:
            raise DatasetError(f"{len(unlabeled)} unlabeled issues, e.g. {unlabeled[:5]}")


def normalize_label(raw: str) -> str | None:
    """Canonical label for an exact, case-insensitive match, else ``None``."""
    key = raw.strip().lower()
    return key if key in CANONICAL_LABELS else None


def load_csv(path: str | os.PathLike) -> Dataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        return read_csv(fh, provenance=f"csv:{path.name}")


def read_csv(fh: io.TextIOBase, provenance: str = "") -> Dataset:
    reader = csv.reader(fh, strict=True)
    try:
        header = next(reader)
    except StopIteration:
        raise CSVFormatError(1, "empty file, expected header id,label,title,body") from None
    except csv.Error as exc:
        raise CSVFormatError(reader.line_num, str(exc)) from exc
    header = [h.strip().lower() for h in header]
    missing = [f for f in CSV_FIELDS if f not in header]
    if missing:
        raise CSVFormatError(1, f"header lacks columns {missing}")
    col = {name: header.index(name) for name in CSV_FIELDS}
    repo_col = header.index("source_repo") if "source_repo" in header else None

    issues: list[LabeledIssue] = []
    bad: list[tuple[int, str]] = []
    multi = 0
    row_no = 0
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            raise CSVFormatError(reader.line_num, str(exc)) from exc
        row_no += 1
        if not row:
            continue
        if len(row) != len(header):
            raise CSVFormatError(reader.line_num, f"expected {len(header)} fields, got {len(row)}")
        raw_label = row[col["label"]]
        parts = [p for p in (s.strip() for s in _LABEL_SPLIT.split(raw_label)) if p]
        if not parts:
            label = None
        else:
            normalized = [normalize_label(p) for p in parts]
            if any(n is None for n in normalized):
                bad.append((row_no, raw_label))
                continue
            if len(set(normalized)) > 1:
                multi += 1
                continue
            label = normalized[0]
        issues.append(LabeledIssue(
            id=row[col["id"]], title=row[col["title"]], body=row[col["body"]], label=label,
            source_repo=(row[repo_col] or None) if repo_col is not None else None,
        ))
    if bad:
        raise LabelValidationError(bad)
    if multi:
        log.warning("dropped %d multi-label issues", multi)
    return Dataset(tuple(issues), provenance)


def save_csv(dataset: Dataset, path: str | os.PathLike) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        write_csv(dataset, fh)


def write_csv(dataset: Dataset, fh: io.TextIOBase) -> None:
    with_repo = any(x.source_repo for x in dataset)
    writer = csv.writer(fh, lineterminator="\r\n")
    writer.writerow(CSV_FIELDS + (("source_repo",) if with_repo else ()))
    for x in dataset:
        row = [x.id, x.label or "", x.title, x.body]
        if any("\0" in f for f in row):
            raise DatasetError(f"issue {x.id!r}: NUL characters cannot be written to CSV")
        if with_repo:
            row.append(x.source_repo or "")
        writer.writerow(row)


def _labeled_pools(dataset: Dataset) -> dict[str, list[LabeledIssue]]:
    # sorted by id so results do not depend on row order
    return {lab: sorted(pool, key=lambda x: x.id) for lab, pool in dataset.by_label().items()}


def balance(dataset: Dataset, per_class: int, seed: int) -> Dataset:
    """Uniform sample of ``per_class`` issues from each label, without replacement."""
    if per_class < 0:
        raise ValueError("per_class must be >= 0")
    pools = _labeled_pools(dataset)
    for lab, pool in pools.items():
        if len(pool) < per_class:
            raise InsufficientDataError(
                f"class {lab!r} has {len(pool)} issues, {per_class} requested")
    chosen: set[str] = set()
    for lab, pool in pools.items():
        rng = SplitMix64(derive_seed(seed, "balance", lab))
        chosen.update(x.id for x in rng.sample(pool, per_class))
    return dataset.subset(chosen, f"balance(per_class={per_class}, seed={seed}) of {dataset.provenance}")


def sample(dataset: Dataset, size: int, seed: int, salt: str = "sample") -> Dataset:
    """Uniform sample of ``size`` issues, keeping the original order."""
    pool = sorted(dataset.issues, key=lambda x: x.id)
    if len(pool) < size:
        raise InsufficientDataError(f"{len(pool)} issues available, {size} requested")
    picked = SplitMix64(derive_seed(seed, salt)).sample(pool, size)
    return dataset.subset((x.id for x in picked), f"{salt}(size={size}, seed={seed}) of {dataset.provenance}")


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int] = field(default_factory=dict)

    def fold(self, i: int) -> set[str]:
        return {issue_id for issue_id, f in self.assignment.items() if f == i}

    def folds(self) -> list[set[str]]:
        out: list[set[str]] = [set() for _ in range(self.k)]
        for issue_id, f in self.assignment.items():
            out[f].add(issue_id)
        return out

    def split(self, dataset: Dataset, i: int) -> tuple[Dataset, Dataset]:
        """(train, test) datasets for fold ``i``."""
        test = [x for x in dataset if self.assignment[x.id] == i]
        train = [x for x in dataset if self.assignment[x.id] != i]
        return Dataset(tuple(train), f"fold {i} train"), Dataset(tuple(test), f"fold {i} test")


def stratified_kfold(dataset: Dataset, k: int, seed: int) -> FoldPlan:
    """Per class: sort by id, seeded shuffle, deal round-robin into ``k`` folds.

    The dealing position carries over from one class to the next so that
    overall fold sizes stay within one of each other as well.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    dataset.require_labeled()
    pools = _labeled_pools(dataset)
    small = {lab: len(p) for lab, p in pools.items() if 0 < len(p) < k}
    if small:
        raise InsufficientDataError(f"classes smaller than k={k}: {small}")
    rng = SplitMix64(derive_seed(seed, "kfold", k))
    assignment: dict[str, int] = {}
    offset = 0
    for lab in CANONICAL_LABELS:
        pool = list(pools[lab])
        rng.shuffle(pool)
        for j, issue in enumerate(pool):
            assignment[issue.id] = (offset + j) % k
        offset = (offset + len(pool)) % k
    return FoldPlan(k, assignment)


def write_folds(plan: FoldPlan, path: str | os.PathLike) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("id", "fold"))
        for issue_id in sorted(plan.assignment):
            writer.writerow((issue_id, plan.assignment[issue_id]))


def read_folds(path: str | os.PathLike) -> FoldPlan:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assignment = {r["id"]: int(r["fold"]) for r in rows}
    return FoldPlan(max(assignment.values(), default=-1) + 1, assignment)


@dataclass(frozen=True)
class TfidfMatrix:
    terms: list[str]
    document_frequency: list[int]
    rows: list[dict[int, float]]
    labels: list[str | None]


def tfidf(dataset: Dataset) -> TfidfMatrix:
    """Document-term matrix with weight ``tf * ln(N / df)``.

    ``tf`` is the raw token count in title + body, ``df`` the number of
    documents containing the term; no smoothing.  Terms are indexed in sorted
    order starting at 0.
    """
    counts = [Counter(x.tokens()) for x in dataset]
    df: Counter[str] = Counter()
    for c in counts:
        df.update(c.keys())
    terms = sorted(df)
    index = {t: i for i, t in enumerate(terms)}
    n = len(counts)
    idf = {t: math.log(n / d) for t, d in df.items()}
    rows = [{index[t]: tf * idf[t] for t, tf in sorted(c.items())} for c in counts]
    return TfidfMatrix(terms, [df[t] for t in terms], rows, [x.label for x in dataset])


def export_tfidf(dataset: Dataset, path: str | os.PathLike) -> dict[str, object]:
    """Write the tf-idf matrix in sparse text form plus a ``.vocab`` sidecar.

    Matrix file: one line per issue, ``<label> <index>:<weight> ...`` with
    indices ascending; every term present in the issue is listed, so terms
    occurring in all documents appear with weight 0.  Sidecar: one line per
    term, ``<index>\\t<term>\\t<document frequency>``.
    """
    dataset.require_labeled()
    m = tfidf(dataset)
    path = Path(path)
    vocab_path = path.with_name(path.name + ".vocab")
    nnz = 0
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for label, row in zip(m.labels, m.rows):
            nnz += len(row)
            pairs = " ".join(f"{i}:{w:.17g}" for i, w in row.items())
            fh.write(f"{label} {pairs}".rstrip() + "\n")
    with vocab_path.open("w", encoding="utf-8", newline="\n") as fh:
        for i, (t, d) in enumerate(zip(m.terms, m.document_frequency)):
            fh.write(f"{i}\t{t}\t{d}\n")
    return {"documents": len(m.rows), "terms": len(m.terms), "nonzeros": nnz,
            "matrix_path": str(path), "vocab_path": str(vocab_path)}


def fasttext_line(issue: LabeledIssue) -> str:
    text = " ".join(issue.text.split())
    return f"__label__{issue.label} {text}" if issue.label else text


def export_fasttext(dataset: Dataset, path: str | os.PathLike) -> int:
    dataset.require_labeled()
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for issue in dataset:
            fh.write(fasttext_line(issue) + "\n")
    return len(dataset)


def read_fasttext(path: str | os.PathLike) -> list[tuple[str, str]]:
    """``(label, text)`` pairs from ``__label__<name> <text>`` lines.

    Labels are kept verbatim so custom label sets can be trained.
    """
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            head, _, text = line.partition(" ")
            if not head.startswith("__label__") or len(head) == len("__label__"):
                raise CSVFormatError(n, "expected '__label__<name> <text>'")
            out.append((head[len("__label__"):], text))
    return out


def training_pairs(dataset: Dataset) -> list[tuple[list[str], str]]:
    dataset.require_labeled()
    return [(x.tokens(), x.label) for x in dataset]  # type: ignore[misc]
