"""Dictionary-based extraction of symptom and medication mentions from clinical notes.

Matching runs on lowercased, punctuation-trimmed tokens with stopwords
removed. Lexicon terms are indexed by their non-stopword tokens, so
"shortness of breath" matches the token run ``shortness breath``.
Negation is not handled: "no chest pain" still yields "chest pain".
"""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .core import DataError, Encoder
from .ingest import NoteRow

log = logging.getLogger(__name__)

KINDS = ("symptom", "medication")
MAX_TERM_TOKENS = 4
_PUNCT = string.punctuation

SubjectSymptomTable = dict[int, list[int]]


def tokenize(text: str) -> list[str]:
    tokens = (t.strip(_PUNCT) for t in text.lower().split())
    return [t for t in tokens if t]


@dataclass(frozen=True)
class Lexicon:
    terms: dict[str, str]
    stopwords: frozenset[str] = frozenset()
    _index: dict[tuple[str, ...], str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.terms:
            raise DataError("lexicon has no terms")
        index: dict[tuple[str, ...], str] = {}
        for term, kind in self.terms.items():
            if kind not in KINDS:
                raise DataError(f"lexicon term {term!r} has unknown kind {kind!r}")
            key = tuple(t for t in tokenize(term) if t not in self.stopwords)
            if not key:
                raise DataError(f"lexicon term {term!r} consists only of stopwords")
            if len(key) > MAX_TERM_TOKENS:
                raise DataError(f"lexicon term {term!r} exceeds {MAX_TERM_TOKENS} content tokens")
            # first spelling wins when two terms normalize to the same tokens
            index.setdefault(key, term)
        object.__setattr__(self, "_index", index)

    def lookup(self, tokens: tuple[str, ...]) -> Optional[str]:
        return self._index.get(tokens)

    def to_dict(self) -> dict:
        return {"terms": dict(self.terms), "stopwords": sorted(self.stopwords)}

    @classmethod
    def from_dict(cls, d: dict) -> "Lexicon":
        return cls(terms=dict(d["terms"]), stopwords=frozenset(d.get("stopwords", ())))


def _read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def parse_lexicon(lines: Iterable[str], stopwords: Iterable[str] = ()) -> Lexicon:
    terms: dict[str, str] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"lexicon line {lineno}: expected 'term<TAB>kind'")
        term, kind = parts[0].strip().lower(), parts[1].strip().lower()
        terms[term] = kind
    stop = frozenset(w.strip().lower() for w in stopwords if w.strip())
    return Lexicon(terms, stop)


def load_lexicon(path, stopwords_path=None) -> Lexicon:
    stop = _read_lines(stopwords_path) if stopwords_path else default_stopwords()
    return parse_lexicon(_read_lines(path), stop)


def default_stopwords() -> list[str]:
    return resources.files("comorec").joinpath("data/stopwords.txt").read_text(encoding="utf-8").splitlines()


def default_lexicon() -> Lexicon:
    text = resources.files("comorec").joinpath("data/default_lexicon.tsv").read_text(encoding="utf-8")
    return parse_lexicon(text.splitlines(), default_stopwords())


def extract_terms(tokens: list[str], lexicon: Lexicon) -> list[tuple[str, str]]:
    """Greedy longest-match scan; matched spans consume their tokens."""
    content = [t for t in tokens if t not in lexicon.stopwords]
    out = []
    i = 0
    while i < len(content):
        for width in range(min(MAX_TERM_TOKENS, len(content) - i), 0, -1):
            term = lexicon.lookup(tuple(content[i : i + width]))
            if term is not None:
                out.append((term, lexicon.terms[term]))
                i += width
                break
        else:
            i += 1
    return out


def build_subject_symptom_table(
    notes: list[NoteRow],
    lexicon: Lexicon,
    subject_encoder: Encoder,
    symptom_encoder: Optional[Encoder] = None,
) -> tuple[SubjectSymptomTable, Encoder]:
    """Map each subject index to its distinct extracted terms, in order of first mention.

    Symptoms and medications share one vocabulary. When ``symptom_encoder`` is
    given, every extracted term must already be in it.
    """
    per_subject: dict[int, dict[str, None]] = {}
    first_seen: dict[str, None] = {}
    unknown = 0
    for note in notes:
        if note.subject_id not in subject_encoder:
            unknown += 1
            continue
        terms = extract_terms(tokenize(note.text), lexicon)
        if not terms:
            continue
        bucket = per_subject.setdefault(subject_encoder.encode(note.subject_id), {})
        for term, _ in terms:
            bucket.setdefault(term, None)
            first_seen.setdefault(term, None)
    if unknown:
        log.warning("skipped %d notes for subjects without diagnoses", unknown)

    if symptom_encoder is None:
        symptom_encoder = Encoder(first_seen)
    table: SubjectSymptomTable = {}
    for subject, bucket in per_subject.items():
        try:
            table[subject] = [symptom_encoder.encode(t) for t in bucket]
        except DataError as exc:
            raise DataError(f"vocabulary mismatch: {exc}") from None
    log.info("%d subjects with note-derived terms; vocabulary of %d terms", len(table), len(symptom_encoder))
    return table, symptom_encoder
