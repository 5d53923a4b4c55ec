import json
import re
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from issuetagger.confounds import (
    TreatmentSpec,
    build_profile,
    build_treatment,
    bundled_corpora,
    default_profiles,
    detect_code_snippet,
    detect_language,
    profile_from_corpus,
    read_profile,
    treatment_predicate,
    write_profile,
)
from issuetagger.dataset import Dataset, InsufficientDataError, LabeledIssue

FIXTURES = Path(__file__).parent / "fixtures"
SNIPPET_CASES = json.loads((FIXTURES / "snippet_cases.json").read_text(encoding="utf-8"))

# independent statement of the rule: a line-start fence, then a later line-start fence
_FENCED = re.compile(r"^```.*?\n```", re.MULTILINE | re.DOTALL)


def fence_oracle(body: str) -> bool:
    return _FENCED.search(body.replace("\r\n", "\n")) is not None


@pytest.mark.parametrize("case", SNIPPET_CASES, ids=lambda c: f"{c['kind']}:{c['body'][:20]!r}")
def test_snippet_cases(case):
    assert detect_code_snippet(case["body"]) is case["expected"]
    assert fence_oracle(case["body"]) is case["expected"]


def test_snippet_examples():
    assert detect_code_snippet("see\n```\nx=1\n```\nabove")
    assert not detect_code_snippet("use the `foo` flag")
    assert not detect_code_snippet("opening ``` only, never closed")


markdown = st.lists(st.sampled_from(["text", "`x`", "``", "    code", "~~~", "a ``` b", "```", "```py", ""]),
                    max_size=8).map("\n".join)


@given(markdown)
def test_snippet_matches_oracle(body):
    assert detect_code_snippet(body) == fence_oracle(body)


@given(markdown, st.integers(0, 8))
def test_inserting_fence_makes_true(body, at):
    lines = body.split("\n")
    at = min(at, len(lines))
    lines[at:at] = ["```", "code", "```"]
    assert detect_code_snippet("\n".join(lines))


@given(st.text())
def test_no_backticks_is_false(body):
    assert not detect_code_snippet(body.replace("`", ""))


# language

def test_bundled_corpora_cover_required_languages():
    tags = {c.language_tag for c in bundled_corpora()}
    assert {"eng", "deu", "fra", "spa", "por", "rus", "cmn"} <= tags
    assert sum(len(c.held_out) for c in bundled_corpora()) == 100


def test_bundled_profiles_are_rebuilt_from_corpora():
    shipped = {p.language_tag: p for p in default_profiles()}
    for corpus in bundled_corpora():
        rebuilt = profile_from_corpus(corpus)
        assert rebuilt.trigram_ranks == shipped[corpus.language_tag].trigram_ranks
        assert rebuilt.script == shipped[corpus.language_tag].script


def test_profile_ranks_dense_and_capped():
    for p in default_profiles():
        assert sorted(p.trigram_ranks.values()) == list(range(len(p.trigram_ranks)))
        assert len(p.trigram_ranks) <= 300


def test_profile_file_round_trip(tmp_path):
    p = build_profile("xxx", "Latin", ["alpha beta gamma", "delta epsilon"], "unit test")
    write_profile(p, tmp_path / "x.tsv")
    assert read_profile(tmp_path / "x.tsv") == p


def test_language_examples():
    tag, conf = detect_language("the quick brown fox jumps over the lazy dog", default_profiles())
    assert tag == "eng" and conf > 0
    assert detect_language("", default_profiles()) == ("und", 0)
    latin = [p for p in default_profiles() if p.script == "Latin"]
    assert detect_language("Это предложение написано по-русски и довольно длинное", latin) == ("und", 0)


@given(st.text(max_size=30))
def test_short_texts_undetermined(text):
    letters = sum(ch.isalpha() for ch in text)
    if letters < 10:
        assert detect_language(text, default_profiles()) == ("und", 0)


def test_confidence_in_unit_interval():
    for corpus in bundled_corpora():
        for text in corpus.held_out[:3]:
            _, conf = detect_language(text, default_profiles())
            assert 0.0 <= conf <= 1.0


def test_held_out_accuracy():
    samples = [(c.language_tag, t) for c in bundled_corpora() for t in c.held_out]
    hits = sum(detect_language(t, default_profiles())[0] == tag for tag, t in samples)
    assert hits / len(samples) >= 0.9


# treatments

def _mixed_dataset():
    corpora = {c.language_tag: c for c in bundled_corpora()}
    issues = []
    labels = ("bug", "enhancement", "question")
    n = 0
    for tag in ("eng", "deu", "fra"):
        for para in corpora[tag].train + corpora[tag].held_out:
            body = para + ("\n```\nstack trace here\n```" if n % 4 == 0 else "")
            issues.append(LabeledIssue(f"{tag}-{n}", f"Issue {n}", body, labels[n % 3]))
            n += 1
    return Dataset(tuple(issues))


def test_language_treatment():
    ds = _mixed_dataset()
    spec = TreatmentSpec("consistent_language", 10, seed=5)
    treatment, baseline = build_treatment(ds, spec)
    assert len(treatment) == len(baseline) == 10
    keep = treatment_predicate(spec)
    assert all(keep(x) for x in treatment)
    assert all(x.id.startswith("eng-") for x in treatment)
    again = build_treatment(ds, spec)
    assert again[0].issues == treatment.issues and again[1].issues == baseline.issues


def test_snippet_treatment():
    ds = _mixed_dataset()
    treatment, baseline = build_treatment(ds, TreatmentSpec("code_snippet_presence", 8, seed=1))
    assert len(treatment) == 8 and all(detect_code_snippet(x.body) for x in treatment)
    assert len(baseline) == 8


def test_treatment_errors():
    with pytest.raises(ValueError):
        TreatmentSpec("code_snippet_presence", 0, seed=1)
    with pytest.raises(ValueError):
        TreatmentSpec("sentiment", 5, seed=1)
    with pytest.raises(InsufficientDataError, match="qualifying issues available"):
        build_treatment(_mixed_dataset(), TreatmentSpec("consistent_language", 500, seed=1))
