"""Read MIMIC-III shaped DIAGNOSES_ICD / NOTEEVENTS CSV exports.

Only the columns listed in ``DIAGNOSIS_COLUMNS`` and ``NOTE_COLUMNS`` are
used; header matching is case-insensitive and any other column is ignored.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .core import DataError, Encoder, InteractionSet, SchemaError, fit_encoder

log = logging.getLogger(__name__)

DIAGNOSIS_COLUMNS = ("SUBJECT_ID", "HADM_ID", "ICD9_CODE")
NOTE_COLUMNS = ("SUBJECT_ID", "HADM_ID", "CATEGORY", "TEXT")
DEFAULT_EXCLUDED_CATEGORIES = frozenset({"Discharge summary"})


@dataclass(frozen=True)
class DiagnosisRow:
    subject_id: str
    hadm_id: str
    icd9_code: str


@dataclass(frozen=True)
class NoteRow:
    subject_id: str
    hadm_id: str
    category: str
    text: str


def _read_table(path, required: tuple[str, ...]):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None
        upper = [h.strip().upper() for h in header]
        positions = []
        for col in required:
            if col not in upper:
                raise SchemaError(f"{path}: missing required column {col}")
            positions.append(upper.index(col))
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) <= max(positions):
                raise DataError(f"{path}:{lineno}: expected at least {max(positions) + 1} fields, got {len(rec)}")
            yield tuple(rec[p] for p in positions)


def load_diagnoses(path) -> list[DiagnosisRow]:
    rows, dropped = [], 0
    for subject, hadm, code in _read_table(path, DIAGNOSIS_COLUMNS):
        subject, hadm, code = subject.strip(), hadm.strip(), code.strip()
        if not (subject and hadm and code):
            dropped += 1
            continue
        rows.append(DiagnosisRow(subject, hadm, code))
    if dropped:
        log.warning("%s: dropped %d rows with an empty SUBJECT_ID/HADM_ID/ICD9_CODE", path, dropped)
    if not rows:
        log.warning("%s: no diagnosis rows", path)
    return rows


def load_notes(
    path,
    excluded_categories: Iterable[str] = DEFAULT_EXCLUDED_CATEGORIES,
    max_notes: Optional[int] = None,
) -> list[NoteRow]:
    """Load notes, dropping excluded categories and keeping at most ``max_notes`` in file order."""
    if max_notes is not None and max_notes < 1:
        raise ValueError("max_notes must be a positive integer")
    excluded = {c.strip().lower() for c in excluded_categories}
    rows, n_excluded, n_empty = [], 0, 0
    for subject, hadm, category, text in _read_table(path, NOTE_COLUMNS):
        if max_notes is not None and len(rows) >= max_notes:
            break
        if category.strip().lower() in excluded:
            n_excluded += 1
            continue
        if not text.strip() or not subject.strip():
            n_empty += 1
            continue
        rows.append(NoteRow(subject.strip(), hadm.strip(), category.strip(), text))
    log.info("%s: %d notes kept, %d excluded by category, %d empty", path, len(rows), n_excluded, n_empty)
    return rows


def filter_top_k_codes(rows: list[DiagnosisRow], k: int) -> tuple[list[DiagnosisRow], float]:
    """Keep rows whose code is among the ``k`` most frequent.

    Ties at rank ``k`` go to the lexicographically smaller code. Returns the
    kept rows and the fraction of input rows they represent.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not rows:
        raise DataError("cannot filter an empty diagnosis table")
    counts = Counter(r.icd9_code for r in rows)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = {code for code, _ in ranked[:k]}
    kept = [r for r in rows if r.icd9_code in keep]
    return kept, len(kept) / len(rows)


def build_positive_set(
    rows: list[DiagnosisRow],
    subject_encoder: Optional[Encoder] = None,
    code_encoder: Optional[Encoder] = None,
) -> tuple[InteractionSet, Encoder, Encoder]:
    """One positive interaction per distinct (subject, code) pair.

    Encoders are fit on ``rows`` unless given; with given encoders every
    identifier must already be registered (evaluation against a saved model).
    """
    if not rows:
        raise DataError("no diagnosis rows to build interactions from")
    if subject_encoder is None:
        subject_encoder = fit_encoder(r.subject_id for r in rows)
    if code_encoder is None:
        code_encoder = fit_encoder(r.icd9_code for r in rows)
    seen: dict[tuple[int, int], None] = {}
    for r in rows:
        try:
            pair = (subject_encoder.encode(r.subject_id), code_encoder.encode(r.icd9_code))
        except DataError as exc:
            raise DataError(f"vocabulary mismatch: {exc}") from None
        seen.setdefault(pair, None)
    subjects = [s for s, _ in seen]
    codes = [c for _, c in seen]
    data = InteractionSet(
        subjects=subjects,
        codes=codes,
        labels=[1] * len(subjects),
        n_subjects=len(subject_encoder),
        n_codes=len(code_encoder),
    )
    return data, subject_encoder, code_encoder


def write_diagnoses(rows: Iterable[DiagnosisRow], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ROW_ID", *DIAGNOSIS_COLUMNS])
        for i, r in enumerate(rows, start=1):
            w.writerow([i, r.subject_id, r.hadm_id, r.icd9_code])


def write_notes(rows: Iterable[NoteRow], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ROW_ID", *NOTE_COLUMNS])
        for i, r in enumerate(rows, start=1):
            w.writerow([i, r.subject_id, r.hadm_id, r.category, r.text])
