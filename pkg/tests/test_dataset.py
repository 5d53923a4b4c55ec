import io
import logging
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from synthetic import separable_issues

from issuetagger.dataset import (
    CSVFormatError,
    Dataset,
    DatasetError,
    InsufficientDataError,
    LabeledIssue,
    LabelValidationError,
    balance,
    export_fasttext,
    export_tfidf,
    load_csv,
    normalize_label,
    read_csv,
    read_fasttext,
    read_folds,
    save_csv,
    stratified_kfold,
    tfidf,
    write_csv,
    write_folds,
)

HEADER = "id,label,title,body\r\n"


def parse(text: str) -> Dataset:
    return read_csv(io.StringIO(text, newline=""))


def make(counts: dict[str, int], prefix: str = "i") -> Dataset:
    issues, n = [], 0
    for label, c in counts.items():
        for _ in range(c):
            issues.append(LabeledIssue(f"{prefix}{n:05d}", f"title {n}", f"body {n}", label))
            n += 1
    return Dataset(tuple(issues))


def test_load_three_rows(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text(HEADER + "1,bug,Crash,App dies\r\n2,Enhancement,Dark mode,\r\n3,question,How?,x\r\n",
                    encoding="utf-8")
    ds = load_csv(path)
    assert len(ds) == 3
    assert [x.label for x in ds] == ["bug", "enhancement", "question"]
    assert ds.issues[1].body == ""


def test_multiline_body_preserved():
    body = 'line one\r\nline "two"\n\n```\ncode, with comma\n```\n'
    buf = io.StringIO(newline="")
    write_csv(Dataset((LabeledIssue("7", "t", body, "bug"),)), buf)
    assert parse(buf.getvalue()).issues[0].body == body


def test_unknown_label_names_rows():
    with pytest.raises(LabelValidationError) as err:
        parse(HEADER + "1,bug,a,b\r\n2,feature,c,d\r\n3,kind/bug,e,f\r\n")
    assert err.value.rows == [(2, "feature"), (3, "kind/bug")]
    assert "row 2" in str(err.value)


def test_multi_label_rows_dropped(caplog):
    with caplog.at_level(logging.WARNING):
        ds = parse(HEADER + '1,"bug,question",a,b\r\n2,bug,c,d\r\n3,"bug;bug",e,f\r\n')
    assert [x.id for x in ds] == ["2", "3"]
    assert "dropped 1 multi-label" in caplog.text


@pytest.mark.parametrize("text,line", [
    ("", 1),
    ("id,title\r\n", 1),
    (HEADER + '1,bug,"unterminated\r\n', 2),
    (HEADER + "1,bug,too,many,fields\r\n", 2),
])
def test_malformed_csv_reports_line(text, line):
    with pytest.raises(CSVFormatError) as err:
        parse(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_duplicate_ids_rejected():
    with pytest.raises(DatasetError):
        parse(HEADER + "1,bug,a,b\r\n1,bug,c,d\r\n")


@pytest.mark.parametrize("raw,expected", [
    ("Bug", "bug"), ("enhancement", "enhancement"), (" QUESTION ", "question"),
    ("kind/bug", None), ("bugs", None), ("", None),
])
def test_normalize_label(raw, expected):
    assert normalize_label(raw) == expected


issue_st = st.builds(
    LabeledIssue,
    id=st.uuids().map(str),
    title=st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\0"), max_size=30),
    body=st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\0"), max_size=60),
    label=st.sampled_from(["bug", "enhancement", "question", None]),
    source_repo=st.sampled_from([None, "o/r"]),
)


@settings(max_examples=50)
@given(st.lists(issue_st, max_size=10, unique_by=lambda x: x.id))
def test_csv_round_trip(issues):
    ds = Dataset(tuple(issues))
    buf = io.StringIO(newline="")
    write_csv(ds, buf)
    assert parse(buf.getvalue()).issues == ds.issues


def test_save_load_round_trip(tmp_path):
    ds = separable_issues(30)
    save_csv(ds, tmp_path / "x.csv")
    assert load_csv(tmp_path / "x.csv").issues == ds.issues


# balancing

def test_balance_uniform_and_deterministic():
    ds = make({"bug": 50, "enhancement": 30, "question": 12})
    out = balance(ds, 10, seed=1)
    assert out.class_counts() == {"bug": 10, "enhancement": 10, "question": 10}
    assert balance(ds, 10, seed=1).issues == out.issues
    assert balance(ds, 10, seed=2).issues != out.issues
    assert len(balance(ds, 0, seed=1)) == 0


def test_balance_independent_of_row_order():
    ds = make({"bug": 40, "enhancement": 40, "question": 40})
    rev = Dataset(tuple(reversed(ds.issues)))
    assert {x.id for x in balance(ds, 7, 3)} == {x.id for x in balance(rev, 7, 3)}


def test_balance_paper_scale():
    ds = make({"bug": 10_500, "enhancement": 10_200, "question": 10_050})
    out = balance(ds, 10_000, seed=42)
    assert len(out) == 30_000
    assert set(out.class_counts().values()) == {10_000}


def test_balance_insufficient():
    with pytest.raises(InsufficientDataError, match="'question' has 12"):
        balance(make({"bug": 50, "enhancement": 30, "question": 12}), 20, 1)


# folds

def test_kfold_exact_division():
    plan = stratified_kfold(make({"bug": 10, "enhancement": 10, "question": 10}), 10, 0)
    ds = make({"bug": 10, "enhancement": 10, "question": 10})
    label = {x.id: x.label for x in ds}
    for fold in plan.folds():
        assert sorted(label[i] for i in fold) == ["bug", "enhancement", "question"]


def test_kfold_31_issues():
    ds = make({"bug": 11, "enhancement": 10, "question": 10})
    sizes = [len(f) for f in stratified_kfold(ds, 10, 0).folds()]
    assert sorted(sizes) == [3] * 9 + [4]


def test_kfold_small_class():
    with pytest.raises(InsufficientDataError):
        stratified_kfold(make({"bug": 20, "enhancement": 20, "question": 4}), 5, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 10), st.integers(0, 40), st.integers(0, 40), st.integers(0, 40), st.integers(0, 2**32))
def test_kfold_partition_properties(k, nb, ne, nq, seed):
    counts = {lab: n for lab, n in zip(("bug", "enhancement", "question"), (nb, ne, nq)) if n >= k}
    ds = make(counts)
    plan = stratified_kfold(ds, k, seed)
    folds = plan.folds()
    assert sum(len(f) for f in folds) == len(ds)
    assert set().union(*folds) == {x.id for x in ds}
    by_label = ds.by_label()
    for label, members in by_label.items():
        ids = {x.id for x in members}
        per_fold = [len(f & ids) for f in folds]
        assert max(per_fold) - min(per_fold) <= 1
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    shuffled = Dataset(tuple(reversed(ds.issues)))
    assert stratified_kfold(shuffled, k, seed).assignment == plan.assignment


def test_fold_file_round_trip(tmp_path):
    plan = stratified_kfold(make({"bug": 12, "enhancement": 12, "question": 12}), 4, 9)
    write_folds(plan, tmp_path / "f.csv")
    assert read_folds(tmp_path / "f.csv") == plan


# tf-idf

def test_tfidf_hand_oracle(tmp_path):
    ds = Dataset((
        LabeledIssue("a", "crash crash", "on save", "bug"),
        LabeledIssue("b", "save", "dark mode", "enhancement"),
        LabeledIssue("c", "how", "to save mode", "question"),
    ))
    # terms: crash dark how mode on save to ; df: 1 1 1 2 1 3 1 ; N = 3
    l3, l32 = math.log(3), math.log(1.5)
    expected = [
        {0: 2 * l3, 4: l3, 5: 0.0},
        {1: l3, 3: l32, 5: 0.0},
        {2: l3, 3: l32, 5: 0.0, 6: l3},
    ]
    m = tfidf(ds)
    assert m.terms == ["crash", "dark", "how", "mode", "on", "save", "to"]
    assert m.document_frequency == [1, 1, 1, 2, 1, 3, 1]
    for got, want in zip(m.rows, expected):
        assert got.keys() == want.keys()
        for i in want:
            assert got[i] == pytest.approx(want[i], abs=1e-9)

    summary = export_tfidf(ds, tmp_path / "m.txt")
    assert summary["documents"] == 3 and summary["terms"] == 7 and summary["nonzeros"] == 10
    lines = (tmp_path / "m.txt").read_text().splitlines()
    assert lines[0].split()[0] == "bug"
    parsed = {int(i): float(w) for i, w in (p.split(":") for p in lines[0].split()[1:])}
    assert parsed == pytest.approx(expected[0], abs=1e-12)
    vocab = (tmp_path / "m.txt.vocab").read_text().splitlines()
    assert vocab[5] == "5\tsave\t3"


def test_tfidf_single_document():
    m = tfidf(Dataset((LabeledIssue("a", "bug bug", "", "bug"),)))
    assert m.rows == [{0: 0.0}]


@settings(max_examples=30)
@given(st.lists(st.lists(st.sampled_from("abcde"), min_size=1, max_size=6), min_size=1, max_size=8))
def test_tfidf_nonnegative_and_universal_terms_zero(docs):
    ds = Dataset(tuple(LabeledIssue(str(i), " ".join(d), "", "bug") for i, d in enumerate(docs)))
    m = tfidf(ds)
    for row in m.rows:
        for i, w in row.items():
            assert w >= 0
            if m.document_frequency[i] == len(docs):
                assert w == 0


# fastText format

def test_fasttext_export(tmp_path):
    ds = Dataset((LabeledIssue("1", "Crash", "on\nsave\r\n  now", "bug"),
                  LabeledIssue("2", "Add", "", "enhancement")))
    assert export_fasttext(ds, tmp_path / "f.txt") == 2
    assert (tmp_path / "f.txt").read_text().splitlines() == [
        "__label__bug Crash on save now", "__label__enhancement Add"]
    assert read_fasttext(tmp_path / "f.txt")[0] == ("bug", "Crash on save now")


def test_fasttext_reader_rejects_unlabeled(tmp_path):
    (tmp_path / "f.txt").write_text("__label__x ok\nno label here\n")
    with pytest.raises(CSVFormatError, match="line 2"):
        read_fasttext(tmp_path / "f.txt")


def test_nul_characters_rejected_on_write():
    with pytest.raises(DatasetError, match="NUL"):
        write_csv(Dataset((LabeledIssue("1", "a\0b", "", "bug"),)), io.StringIO())
