"""Confounding-factor treatments: language consistency and code snippet presence."""

from .language import (
    LanguageProfile,
    build_profile,
    bundled_corpora,
    default_profiles,
    detect_language,
    profile_from_corpus,
    read_profile,
    write_profile,
)
from .snippets import detect_code_snippet
from .treatment import TREATMENT_KINDS, TreatmentSpec, build_treatment, treatment_predicate

__all__ = [
    "LanguageProfile", "TREATMENT_KINDS", "TreatmentSpec", "build_profile", "build_treatment",
    "bundled_corpora", "default_profiles", "detect_code_snippet", "detect_language",
    "profile_from_corpus", "read_profile", "treatment_predicate", "write_profile",
]
