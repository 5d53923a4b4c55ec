"""Experiment protocols and per-class precision / recall / F-measure reports.

Report JSON schema (keys sorted on output)::

    {
      "protocol": "cv" | "holdout",
      "averaging": "pooled" | "per_fold",
      "config": {...TrainConfig...},
      "config_fingerprint": str,
      "labels": [str, ...],
      "confusion": [[int, ...], ...],          # rows gold, columns predicted
      "per_class": {label: {"precision": float|null, "recall": ..., "f_measure": ...}},
      "macro_f": float|null,
      "k": int|null, "seed": int|null,
      "test_proportions": {label: float}|null,
      "predictions": [[id, gold, predicted], ...]
    }

``null`` is the undefined marker (a 0/0 ratio); the text tables print it as
``n/a`` and macro averages skip it.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Mapping, Sequence

import numpy as np

from . import CANONICAL_LABELS
from .classifier import TrainConfig, forward, train
from .dataset import Dataset, FoldPlan, stratified_kfold, training_pairs

Averaging = Literal["pooled", "per_fold"]
METRICS = ("precision", "recall", "f_measure")
_METRIC_NAMES = {"precision": "Precision", "recall": "Recall", "f_measure": "F-measure"}


class FoldError(RuntimeError):
    def __init__(self, fold: int, cause: BaseException):
        super().__init__(f"fold {fold}: {cause}")
        self.fold = fold


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple[str, ...]
    counts: np.ndarray  # rows gold, columns predicted

    @classmethod
    def from_pairs(cls, labels: Sequence[str], gold: Sequence[str], predicted: Sequence[str]) -> "ConfusionMatrix":
        index = {lab: i for i, lab in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for g, p in zip(gold, predicted, strict=True):
            counts[index[g], index[p]] += 1
        return cls(tuple(labels), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.labels != other.labels:
            raise ValueError("label sets differ")
        return ConfusionMatrix(self.labels, self.counts + other.counts)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float | None
    recall: float | None
    f_measure: float | None

    @classmethod
    def from_pr(cls, precision: float | None, recall: float | None) -> "ClassMetrics":
        if precision is None or recall is None:
            f = None
        elif precision + recall == 0:
            f = 0.0
        else:
            f = 2 * precision * recall / (precision + recall)
        return cls(precision, recall, f)

    def get(self, metric: str) -> float | None:
        return getattr(self, metric)

    def to_dict(self) -> dict[str, float | None]:
        return {m: self.get(m) for m in METRICS}


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def metrics_from_confusion(cm: ConfusionMatrix) -> dict[str, ClassMetrics]:
    c = cm.counts
    out = {}
    for i, lab in enumerate(cm.labels):
        tp = int(c[i, i])
        fp = int(c[:, i].sum()) - tp
        fn = int(c[i, :].sum()) - tp
        out[lab] = ClassMetrics.from_pr(_ratio(tp, tp + fp), _ratio(tp, tp + fn))
    return out


def macro_f(per_class: Mapping[str, ClassMetrics]) -> float | None:
    values = [m.f_measure for m in per_class.values() if m.f_measure is not None]
    return sum(values) / len(values) if values else None


def _mean_defined(values: Sequence[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    return sum(defined) / len(defined) if defined else None


@dataclass
class EvaluationReport:
    protocol: Literal["cv", "holdout"]
    labels: tuple[str, ...]
    confusion: ConfusionMatrix
    per_class: dict[str, ClassMetrics]
    config: TrainConfig
    averaging: Averaging = "pooled"
    k: int | None = None
    seed: int | None = None
    test_proportions: dict[str, float] | None = None
    predictions: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def macro_f(self) -> float | None:
        return macro_f(self.per_class)

    @property
    def config_fingerprint(self) -> str:
        return self.config.fingerprint()

    def f_measures(self) -> dict[str, float | None]:
        return {lab: m.f_measure for lab, m in self.per_class.items()}

    def to_dict(self) -> dict[str, Any]:
        return {
            "protocol": self.protocol,
            "averaging": self.averaging,
            "config": self.config.to_dict(),
            "config_fingerprint": self.config_fingerprint,
            "labels": list(self.labels),
            "confusion": self.confusion.counts.tolist(),
            "per_class": {lab: self.per_class[lab].to_dict() for lab in self.labels},
            "macro_f": self.macro_f,
            "k": self.k,
            "seed": self.seed,
            "test_proportions": self.test_proportions,
            "predictions": [list(p) for p in self.predictions],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvaluationReport":
        labels = tuple(data["labels"])
        return cls(
            protocol=data["protocol"],
            labels=labels,
            confusion=ConfusionMatrix(labels, np.array(data["confusion"], dtype=np.int64)),
            per_class={lab: ClassMetrics(**data["per_class"][lab]) for lab in labels},
            config=TrainConfig.from_dict(data["config"]),
            averaging=data.get("averaging", "pooled"),
            k=data.get("k"),
            seed=data.get("seed"),
            test_proportions=data.get("test_proportions"),
            predictions=[tuple(p) for p in data.get("predictions", [])],
        )

    def write(self, path: str | os.PathLike) -> tuple[Path, Path]:
        """Write ``<path>`` (JSON) and ``<path minus suffix>.txt`` (table)."""
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        txt = path.with_suffix(".txt")
        txt.write_text(format_report(self), encoding="utf-8")
        return path, txt


def read_report(path: str | os.PathLike) -> EvaluationReport:
    return EvaluationReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _fmt(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) if i == 0 else cell.rjust(w)
                       for i, (cell, w) in enumerate(zip(r, widths))).rstrip()
             for r in [header, *rows]]
    rule = "-" * len(lines[0])
    return "\n".join([lines[0], rule, *lines[1:]]) + "\n"


def format_report(report: EvaluationReport) -> str:
    labels = report.labels
    rows = [[_METRIC_NAMES[m]] + [_fmt(report.per_class[lab].get(m)) for lab in labels] for m in METRICS]
    if report.protocol == "cv":
        title = f"{report.k}-fold cross validation ({report.averaging})"
    else:
        title = "train/test holdout"
    out = [f"{title}, config {report.config_fingerprint}", "",
           _table(["Metric", *labels], rows),
           f"macro F-measure: {_fmt(report.macro_f)}  (n={report.confusion.total})"]
    if report.test_proportions:
        props = ", ".join(f"{lab} {100 * p:.2f}%" for lab, p in report.test_proportions.items())
        out.append(f"test proportions: {props}")
    cm_rows = [[f"gold {lab}"] + [str(int(v)) for v in row]
               for lab, row in zip(labels, report.confusion.counts)]
    out += ["", _table(["confusion", *(f"pred {lab}" for lab in labels)], cm_rows)]
    return "\n".join(out)


def _predict_dataset(model, test: Dataset) -> list[tuple[str, str, str]]:
    return [(x.id, x.label, forward(model.featurize(x.tokens()), model).argmax_label) for x in test]


def _run_fold(args: tuple[Dataset, FoldPlan, int, TrainConfig, tuple[str, ...]]):
    dataset, plan, i, config, labels = args
    train_set, test_set = plan.split(dataset, i)
    try:
        model = train(training_pairs(train_set), config, labels=labels)
    except Exception as exc:  # noqa: BLE001 - re-raised with the fold index
        raise FoldError(i, exc) from exc
    return _predict_dataset(model, test_set)


def _labels_present(dataset: Dataset) -> tuple[str, ...]:
    counts = dataset.class_counts()
    return tuple(lab for lab in CANONICAL_LABELS if counts[lab] > 0)


def cross_validate(
    dataset: Dataset,
    k: int,
    config: TrainConfig,
    seed: int,
    averaging: Averaging = "pooled",
    n_jobs: int = 1,
) -> EvaluationReport:
    """Stratified k-fold CV; out-of-fold predictions pooled into one confusion matrix.

    With ``averaging="per_fold"`` the per-class metrics are instead the mean
    of each fold's metrics (undefined fold values skipped).
    """
    plan = stratified_kfold(dataset, k, seed)
    labels = _labels_present(dataset)
    jobs = [(dataset, plan, i, config, labels) for i in range(k)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            fold_preds = list(pool.map(_run_fold, jobs))
    else:
        fold_preds = [_run_fold(j) for j in jobs]

    fold_cms = [ConfusionMatrix.from_pairs(labels, [g for _, g, _ in fp], [p for _, _, p in fp])
                for fp in fold_preds]
    pooled = fold_cms[0]
    for cm in fold_cms[1:]:
        pooled = pooled + cm
    if averaging == "pooled":
        per_class = metrics_from_confusion(pooled)
    elif averaging == "per_fold":
        fold_metrics = [metrics_from_confusion(cm) for cm in fold_cms]
        per_class = {}
        for lab in labels:
            p = _mean_defined([fm[lab].precision for fm in fold_metrics])
            r = _mean_defined([fm[lab].recall for fm in fold_metrics])
            f = _mean_defined([fm[lab].f_measure for fm in fold_metrics])
            per_class[lab] = ClassMetrics(p, r, f)
    else:
        raise ValueError(f"unknown averaging {averaging!r}")
    predictions = sorted((p for fp in fold_preds for p in fp), key=lambda t: t[0])
    return EvaluationReport("cv", labels, pooled, per_class, config, averaging,
                            k=k, seed=seed, predictions=predictions)


def evaluate_holdout(train_set: Dataset, test_set: Dataset, config: TrainConfig) -> EvaluationReport:
    test_set.require_labeled()
    labels = _labels_present(train_set)
    model = train(training_pairs(train_set), config, labels=labels)
    stray = sorted({x.label for x in test_set} - set(labels))
    if stray:
        raise ValueError(f"test labels not seen in training: {stray}")
    preds = _predict_dataset(model, test_set)
    cm = ConfusionMatrix.from_pairs(labels, [g for _, g, _ in preds], [p for _, _, p in preds])
    props = {lab: p for lab, p in test_set.proportions().items() if lab in labels}
    return EvaluationReport("holdout", labels, cm, metrics_from_confusion(cm), config,
                            test_proportions=props, predictions=preds)


@dataclass(frozen=True)
class MetricDelta:
    value: float | None  # percentage points, treatment minus baseline

    def __str__(self) -> str:
        if self.value is None:
            return "n/a"
        v = round(self.value, 1)
        return f"{'+' if v >= 0 else '-'}{abs(v):.1f}%"


def compare_reports(baseline: EvaluationReport, treatment: EvaluationReport) -> dict[str, dict[str, MetricDelta]]:
    """Signed percentage-point change of every metric, treatment minus baseline."""
    if baseline.labels != treatment.labels:
        raise ValueError(f"label sets differ: {baseline.labels} vs {treatment.labels}")
    out: dict[str, dict[str, MetricDelta]] = {}
    for lab in baseline.labels:
        out[lab] = {}
        for m in METRICS:
            a, b = baseline.per_class[lab].get(m), treatment.per_class[lab].get(m)
            out[lab][m] = MetricDelta(None if a is None or b is None else 100.0 * (b - a))
    return out


def format_deltas(deltas: Mapping[str, Mapping[str, MetricDelta]], name: str = "treatment") -> str:
    labels = list(deltas)
    rows = [[_METRIC_NAMES[m]] + [str(deltas[lab][m]) for lab in labels] for m in METRICS]
    return f"{name} vs baseline\n\n" + _table(["Metric", *labels], rows)

