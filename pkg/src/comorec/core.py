"""Domain types shared across the package: identifier encoders and interaction sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np


class ComorecError(Exception):
    """Base class for errors raised by this package."""


class DataError(ComorecError, ValueError):
    """Input data is malformed, inconsistent or insufficient."""


class SchemaError(DataError):
    """A required column is missing from an input table."""


class NumericError(ComorecError, ArithmeticError):
    """Training diverged or produced non-finite values."""


class ModelFileError(ComorecError):
    """A model file is corrupt, truncated or of an unsupported version."""


class Encoder:
    """Bidirectional map between raw identifiers and contiguous integer indices.

    Indices are assigned in order of first appearance. The encoder is not
    meant to be mutated after construction.
    """

    __slots__ = ("forward", "backward")

    def __init__(self, backward: Iterable[str] = ()):
        self.backward: list[str] = []
        self.forward: dict[str, int] = {}
        for raw in backward:
            if raw not in self.forward:
                self.forward[raw] = len(self.backward)
                self.backward.append(raw)

    def encode(self, raw: str) -> int:
        try:
            return self.forward[raw]
        except KeyError:
            raise DataError(f"unknown identifier: {raw!r}") from None

    def decode(self, idx: int) -> str:
        if not 0 <= idx < len(self.backward):
            raise DataError(f"index {idx} out of range for vocabulary of size {len(self)}")
        return self.backward[idx]

    def encode_many(self, raws: Iterable[str]) -> np.ndarray:
        return np.array([self.encode(r) for r in raws], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.backward)

    def __contains__(self, raw: object) -> bool:
        return raw in self.forward

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Encoder) and self.backward == other.backward

    def __repr__(self) -> str:
        head = ", ".join(repr(x) for x in self.backward[:5])
        more = ", ..." if len(self) > 5 else ""
        return f"Encoder([{head}{more}], size={len(self)})"


def fit_encoder(raw_ids: Iterable[str]) -> Encoder:
    enc = Encoder(raw_ids)
    if len(enc) == 0:
        raise DataError("empty vocabulary")
    return enc


def encode(e: Encoder, raw: str) -> int:
    return e.encode(raw)


def decode(e: Encoder, idx: int) -> str:
    return e.decode(idx)


class Interaction(NamedTuple):
    subject: int
    code: int
    symptom: Optional[int]
    label: int


def _as_index_array(values: Sequence[int] | np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=np.int64).reshape(-1)


@dataclass(eq=False)
class InteractionSet:
    """Labeled (subject, code[, symptom]) records stored column-wise.

    ``symptoms`` is ``None`` for pair datasets (NCF) and an index array for
    triple datasets (DHF).
    """

    subjects: np.ndarray
    codes: np.ndarray
    labels: np.ndarray
    n_subjects: int
    n_codes: int
    symptoms: Optional[np.ndarray] = None
    n_symptoms: int = 0
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.subjects = _as_index_array(self.subjects)
        self.codes = _as_index_array(self.codes)
        self.labels = _as_index_array(self.labels)
        if self.symptoms is not None:
            self.symptoms = _as_index_array(self.symptoms)
        if self.validate:
            self.check()

    def check(self) -> None:
        n = len(self.subjects)
        if len(self.codes) != n or len(self.labels) != n:
            raise DataError("column lengths differ")
        if self.symptoms is not None and len(self.symptoms) != n:
            raise DataError("symptom column length differs")
        for name, col, card in (
            ("subject", self.subjects, self.n_subjects),
            ("code", self.codes, self.n_codes),
            ("symptom", self.symptoms, self.n_symptoms),
        ):
            if col is None or n == 0:
                continue
            if col.min() < 0 or col.max() >= card:
                raise DataError(f"{name} index out of range for cardinality {card}")
        if n and not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        pos = self.labels == 1
        keys = self.pair_keys()[pos]
        if len(np.unique(keys)) != len(keys):
            raise DataError("duplicate positive (subject, code) pair")

    @property
    def has_symptoms(self) -> bool:
        return self.symptoms is not None

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def records(self) -> list[Interaction]:
        sym = self.symptoms if self.symptoms is not None else [None] * len(self)
        return [
            Interaction(int(s), int(c), None if m is None else int(m), int(y))
            for s, c, m, y in zip(self.subjects, self.codes, sym, self.labels)
        ]

    def pair_keys(self) -> np.ndarray:
        """Flattened ``subject * n_codes + code`` keys, one per record."""
        return self.subjects * self.n_codes + self.codes

    def positive_pairs(self) -> set[tuple[int, int]]:
        pos = self.labels == 1
        return set(zip(self.subjects[pos].tolist(), self.codes[pos].tolist()))

    def index_matrix(self) -> np.ndarray:
        """Model input columns: (subject, code) or (subject, code, symptom)."""
        cols = [self.subjects, self.codes]
        if self.symptoms is not None:
            cols.append(self.symptoms)
        return np.stack(cols, axis=1)

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    @property
    def n_negative(self) -> int:
        return len(self) - self.n_positive

    def take(self, idx: np.ndarray) -> "InteractionSet":
        idx = np.asarray(idx, dtype=np.int64)
        return InteractionSet(
            subjects=self.subjects[idx],
            codes=self.codes[idx],
            labels=self.labels[idx],
            n_subjects=self.n_subjects,
            n_codes=self.n_codes,
            symptoms=None if self.symptoms is None else self.symptoms[idx],
            n_symptoms=self.n_symptoms,
            validate=False,
        )

    def positives(self) -> "InteractionSet":
        return self.take(np.flatnonzero(self.labels == 1))

    @classmethod
    def from_records(
        cls,
        records: Iterable[Interaction],
        n_subjects: int,
        n_codes: int,
        n_symptoms: int = 0,
    ) -> "InteractionSet":
        recs = list(records)
        with_sym = bool(recs) and recs[0].symptom is not None
        if any((r.symptom is not None) != with_sym for r in recs):
            raise DataError("mixed pair and triple records")
        return cls(
            subjects=[r.subject for r in recs],
            codes=[r.code for r in recs],
            labels=[r.label for r in recs],
            n_subjects=n_subjects,
            n_codes=n_codes,
            symptoms=[r.symptom for r in recs] if with_sym else None,
            n_symptoms=n_symptoms,
        )

    @staticmethod
    def concat(a: "InteractionSet", b: "InteractionSet") -> "InteractionSet":
        if (a.n_subjects, a.n_codes, a.n_symptoms) != (b.n_subjects, b.n_codes, b.n_symptoms):
            raise DataError("cardinalities differ")
        if a.has_symptoms != b.has_symptoms:
            raise DataError("cannot concatenate pair and triple sets")
        return InteractionSet(
            subjects=np.concatenate([a.subjects, b.subjects]),
            codes=np.concatenate([a.codes, b.codes]),
            labels=np.concatenate([a.labels, b.labels]),
            n_subjects=a.n_subjects,
            n_codes=a.n_codes,
            symptoms=None if a.symptoms is None else np.concatenate([a.symptoms, b.symptoms]),
            n_symptoms=a.n_symptoms,
        )
