import pytest
from hypothesis import given
from hypothesis import strategies as st

from comorec.core import DataError, fit_encoder
from comorec.ingest import NoteRow
from comorec.notes_nlp import (
    Lexicon,
    build_subject_symptom_table,
    default_lexicon,
    extract_terms,
    parse_lexicon,
    tokenize,
)

LEX = Lexicon({"chest pain": "symptom", "pain": "symptom", "aspirin": "medication", "edema": "symptom"}, frozenset({"given", "of"}))


@pytest.mark.parametrize(
    "text,expected",
    [
        ("Pt c/o Chest Pain.", ["pt", "c/o", "chest", "pain"]),
        ("", []),
        ("  edema,  edema ", ["edema", "edema"]),
        ("... -- !!", []),
    ],
)
def test_tokenize(text, expected):
    assert tokenize(text) == expected


@given(st.text())
def test_tokenize_idempotent(text):
    toks = tokenize(text)
    assert tokenize(" ".join(toks)) == toks


def test_extract_greedy():
    toks = ["severe", "chest", "pain", "given", "aspirin"]
    assert extract_terms(toks, LEX) == [("chest pain", "symptom"), ("aspirin", "medication")]


def test_extract_no_hits():
    assert extract_terms(["nothing", "here"], LEX) == []


def test_longest_match_consumes_shorter():
    assert extract_terms(tokenize("chest pain"), LEX) == [("chest pain", "symptom")]
    assert extract_terms(tokenize("pain in chest"), LEX) == [("pain", "symptom")]


def test_stopwords_inside_terms_skipped():
    lex = parse_lexicon(["shortness of breath\tsymptom"], ["of"])
    assert extract_terms(tokenize("Acute shortness of breath."), lex) == [("shortness of breath", "symptom")]


def test_negation_not_handled():
    lex = default_lexicon()
    assert ("chest pain", "symptom") in extract_terms(tokenize("Denies any chest pain"), lex)


word = st.sampled_from(["chest", "pain", "aspirin", "edema", "given", "of", "severe", "x"])


@given(st.lists(word, max_size=30))
def test_extraction_properties(tokens):
    out = extract_terms(tokens, LEX)
    assert all(term in LEX.terms and LEX.terms[term] == kind for term, kind in out)
    # spans do not overlap: matched content tokens never exceed the content token count
    content = [t for t in tokens if t not in LEX.stopwords]
    assert sum(len(t.split()) for t, _ in out) <= len(content)


def test_lexicon_validation():
    with pytest.raises(DataError):
        Lexicon({}, frozenset())
    with pytest.raises(DataError, match="only of stopwords"):
        Lexicon({"of the": "symptom"}, frozenset({"of", "the"}))
    with pytest.raises(DataError, match="kind"):
        Lexicon({"x": "disease"})
    with pytest.raises(DataError):
        parse_lexicon(["no tab here"])


def test_default_lexicon_size():
    lex = default_lexicon()
    assert 150 <= len(lex.terms) <= 250
    assert set(lex.terms.values()) == {"symptom", "medication"}
    assert Lexicon.from_dict(lex.to_dict()) == lex


def test_load_lexicon_file(tmp_path):
    from comorec.notes_nlp import load_lexicon

    (tmp_path / "l.tsv").write_text("# comment\nShortness of Breath\tsymptom\nheparin\tmedication\n")
    (tmp_path / "s.txt").write_text("of\n")
    lex = load_lexicon(tmp_path / "l.tsv", tmp_path / "s.txt")
    assert lex.terms == {"shortness of breath": "symptom", "heparin": "medication"}
    assert lex.stopwords == frozenset({"of"})


def test_subject_symptom_table():
    subj = fit_encoder(["s1", "s2", "s3"])
    notes = [
        NoteRow("s1", "h", "Nursing", "edema noted"),
        NoteRow("s1", "h", "Nursing", "worse edema; given aspirin"),
        NoteRow("s2", "h", "Nursing", "nothing relevant"),
        NoteRow("s3", "h", "Nursing", "edema"),
        NoteRow("unknown", "h", "Nursing", "chest pain"),
    ]
    table, sym = build_subject_symptom_table(notes, LEX, subj)
    assert table[0] == [sym.encode("edema"), sym.encode("aspirin")]
    assert 1 not in table
    assert table[2] == [sym.encode("edema")]
    assert "chest pain" not in sym
    assert all(i < len(sym) for v in table.values() for i in v)


def test_subject_symptom_table_pinned_vocab_mismatch():
    subj = fit_encoder(["s1"])
    _, sym = build_subject_symptom_table([NoteRow("s1", "h", "N", "edema")], LEX, subj)
    with pytest.raises(DataError, match="aspirin"):
        build_subject_symptom_table([NoteRow("s1", "h", "N", "aspirin")], LEX, subj, sym)
