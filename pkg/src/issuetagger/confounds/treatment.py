from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Sequence

from ..dataset import Dataset, InsufficientDataError, LabeledIssue, sample
from .language import LanguageProfile, default_profiles, detect_language
from .snippets import detect_code_snippet

TreatmentKind = Literal["consistent_language", "code_snippet_presence"]
TREATMENT_KINDS = ("consistent_language", "code_snippet_presence")


@dataclass(frozen=True)
class TreatmentSpec:
    kind: TreatmentKind
    size: int
    seed: int
    language: str = "eng"

    def __post_init__(self) -> None:
        if self.kind not in TREATMENT_KINDS:
            raise ValueError(f"kind must be one of {TREATMENT_KINDS}")
        if self.size <= 0:
            raise ValueError("treatment size must be > 0")


def treatment_predicate(spec: TreatmentSpec,
                        profiles: Sequence[LanguageProfile] | None = None) -> Callable[[LabeledIssue], bool]:
    if spec.kind == "code_snippet_presence":
        return lambda issue: detect_code_snippet(issue.body)
    profiles = default_profiles() if profiles is None else profiles

    def is_language(issue: LabeledIssue) -> bool:
        tag, confidence = detect_language(issue.text, profiles)
        return tag == spec.language and confidence > 0

    return is_language


def build_treatment(dataset: Dataset, spec: TreatmentSpec,
                    profiles: Sequence[LanguageProfile] | None = None) -> tuple[Dataset, Dataset]:
    """(treatment, baseline) arms of ``spec.size`` issues each.

    The treatment arm samples uniformly among issues passing the predicate;
    the baseline arm samples uniformly from the whole pool.
    """
    keep = treatment_predicate(spec, profiles)
    qualifying = Dataset(tuple(x for x in dataset if keep(x)), f"{spec.kind} pool of {dataset.provenance}")
    if len(qualifying) < spec.size:
        raise InsufficientDataError(
            f"{spec.kind}: {len(qualifying)} qualifying issues available, {spec.size} requested")
    if len(dataset) < spec.size:
        raise InsufficientDataError(f"baseline: {len(dataset)} issues available, {spec.size} requested")
    treatment = sample(qualifying, spec.size, spec.seed, salt=f"treatment:{spec.kind}")
    baseline = sample(dataset, spec.size, spec.seed, salt=f"baseline:{spec.kind}")
    return treatment, baseline
