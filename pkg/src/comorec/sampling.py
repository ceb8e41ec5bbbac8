"""Negative example generation, stratified splitting and hit-ratio candidate sets."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DataError, InteractionSet
from .notes_nlp import SubjectSymptomTable

log = logging.getLogger(__name__)

NEG_RATIO_PRESETS = (10, 4, 2)
REJECTION_CAP = 1000


@dataclass(frozen=True)
class NegRatio:
    negatives_per_positive: int

    def __post_init__(self):
        n = self.negatives_per_positive
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
            raise ValueError(f"negatives_per_positive must be a positive integer, got {n!r}")

    def __int__(self) -> int:
        return int(self.negatives_per_positive)


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    validation: float = 0.1
    test: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train, self.validation, self.test)
        if min(fracs) <= 0:
            raise ValueError("split fractions must all be > 0")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)!r}")


@dataclass(frozen=True)
class HitRatioCase:
    subject: int
    held_out_positive: int
    candidates: tuple[int, ...]


def _ratio(ratio) -> int:
    return int(ratio if isinstance(ratio, NegRatio) else NegRatio(ratio))


def _sample_excluding(rng, subject_pool: np.ndarray, n_codes: int, forbidden: np.ndarray, target: int):
    """Uniform (subject, code) draws with ``subject * n_codes + code`` not in ``forbidden``.

    Draws are made in blocks; total attempts are capped at ``REJECTION_CAP * target``.
    """
    subjects = np.empty(0, dtype=np.int64)
    codes = np.empty(0, dtype=np.int64)
    attempts, cap = 0, REJECTION_CAP * target
    while len(subjects) < target:
        if attempts >= cap:
            raise DataError("insufficient negative space")
        block = min(max(2 * (target - len(subjects)), 64), cap - attempts)
        attempts += block
        s = subject_pool[rng.integers(0, len(subject_pool), size=block)]
        c = rng.integers(0, n_codes, size=block)
        keep = ~np.isin(s * n_codes + c, forbidden, assume_unique=False)
        need = target - len(subjects)
        subjects = np.concatenate([subjects, s[keep][:need]])
        codes = np.concatenate([codes, c[keep][:need]])
    return subjects, codes


def generate_negative_pairs(positives: InteractionSet, ratio, seed: int) -> InteractionSet:
    """Positives followed by ``ratio * len(positives)`` sampled negative pairs.

    Negatives are uniform over (subject, code) pairs that are not positive;
    the same negative pair may be drawn more than once.
    """
    if positives.n_negative:
        raise DataError("expected a positive-only interaction set")
    k = _ratio(ratio)
    n_pos = len(positives)
    if positives.n_subjects * positives.n_codes <= n_pos:
        raise DataError("insufficient negative space")
    rng = np.random.default_rng(seed)
    forbidden = np.unique(positives.pair_keys())
    pool = np.arange(positives.n_subjects, dtype=np.int64)
    s, c = _sample_excluding(rng, pool, positives.n_codes, forbidden, k * n_pos)
    negatives = InteractionSet(
        subjects=s,
        codes=c,
        labels=np.zeros(len(s), dtype=np.int64),
        n_subjects=positives.n_subjects,
        n_codes=positives.n_codes,
        validate=False,
    )
    return InteractionSet.concat(positives, negatives)


def generate_negative_triples(
    positives: InteractionSet,
    symptoms: SubjectSymptomTable,
    ratio,
    seed: int,
    n_symptoms: Optional[int] = None,
) -> InteractionSet:
    """Attach one of the subject's own symptoms to each positive and to each sampled negative.

    Positives whose subject has no extracted symptoms are dropped (logged).
    ``n_symptoms`` defaults to one past the largest symptom index in the table.
    """
    if positives.n_negative:
        raise DataError("expected a positive-only interaction set")
    k = _ratio(ratio)
    table = {s: list(v) for s, v in symptoms.items() if v}
    if not table:
        raise DataError("no symptoms for any subject")
    if n_symptoms is None:
        n_symptoms = 1 + max(max(v) for v in table.values())

    has_sym = np.array([s in table for s in positives.subjects.tolist()], dtype=bool)
    dropped = int((~has_sym).sum())
    if dropped:
        log.warning("dropped %d positives whose subject has no note-derived terms", dropped)
    pos = positives.take(np.flatnonzero(has_sym))
    if len(pos) == 0:
        raise DataError("no symptoms for any subject")

    pool = np.array(sorted(table), dtype=np.int64)
    forbidden = np.unique(pos.pair_keys())
    if len(pool) * positives.n_codes <= len(forbidden):
        raise DataError("insufficient negative space")

    rng = np.random.default_rng(seed)
    neg_s, neg_c = _sample_excluding(rng, pool, positives.n_codes, forbidden, k * len(pos))

    def draw_symptoms(subjects: np.ndarray) -> np.ndarray:
        out = np.empty(len(subjects), dtype=np.int64)
        u = rng.random(len(subjects))
        for i, s in enumerate(subjects.tolist()):
            opts = table[s]
            out[i] = opts[int(u[i] * len(opts))]
        return out

    pos_m = draw_symptoms(pos.subjects)
    neg_m = draw_symptoms(neg_s)
    return InteractionSet(
        subjects=np.concatenate([pos.subjects, neg_s]),
        codes=np.concatenate([pos.codes, neg_c]),
        labels=np.concatenate([np.ones(len(pos), dtype=np.int64), np.zeros(len(neg_s), dtype=np.int64)]),
        n_subjects=positives.n_subjects,
        n_codes=positives.n_codes,
        symptoms=np.concatenate([pos_m, neg_m]),
        n_symptoms=n_symptoms,
    )


def _apportion(sizes: np.ndarray, count: int, total: int) -> np.ndarray:
    # largest-remainder rounding of sizes * count / total, in exact integers
    scaled = sizes * count
    base, rem = scaled // total, scaled % total
    order = np.argsort(-rem, kind="stable")
    base[order[: count - int(base.sum())]] += 1
    return base


def split(data: InteractionSet, spec: SplitSpec = SplitSpec()):
    """Stratified, seeded train/validation/test partition.

    Split sizes are ``round(fraction * n)`` for validation and test, train
    takes the rest. Positives are apportioned by largest remainder so each
    split's positive count is within one record of its proportional share.
    """
    n = len(data)
    if n < 10:
        raise DataError(f"need at least 10 records to split, got {n}")
    n_val = int(round(spec.validation * n))
    n_test = int(round(spec.test * n))
    sizes = np.array([n - n_val - n_test, n_val, n_test], dtype=np.int64)
    if sizes.min() < 1:
        raise DataError(f"split fractions {spec} leave an empty split for {n} records")

    n_pos = data.n_positive
    pos_alloc = _apportion(sizes, n_pos, n)
    neg_alloc = sizes - pos_alloc

    rng = np.random.default_rng(spec.seed)
    pos_idx = rng.permutation(np.flatnonzero(data.labels == 1))
    neg_idx = rng.permutation(np.flatnonzero(data.labels == 0))
    pos_cuts = np.cumsum(pos_alloc)[:-1]
    neg_cuts = np.cumsum(neg_alloc)[:-1]
    parts = [
        np.sort(np.concatenate([p, q]))
        for p, q in zip(np.split(pos_idx, pos_cuts), np.split(neg_idx, neg_cuts))
    ]
    return tuple(data.take(p) for p in parts)


def build_hitratio_cases(
    positives: InteractionSet,
    n_candidates: int = 100,
    seed: int = 0,
    held_out_from: Optional[InteractionSet] = None,
) -> list[HitRatioCase]:
    """One ranking case per subject: a held-out positive plus ``n_candidates - 1`` non-positive codes.

    ``positives`` defines what a subject holds (candidates never include
    them). The held-out code is drawn from ``held_out_from`` (default:
    ``positives``), typically the test split's positives.
    """
    if n_candidates > positives.n_codes:
        raise DataError(f"n_candidates={n_candidates} exceeds the {positives.n_codes} available codes")
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    source = positives if held_out_from is None else held_out_from
    pos_mask = positives.labels == 1
    held: dict[int, set[int]] = {}
    for s, c in zip(positives.subjects[pos_mask].tolist(), positives.codes[pos_mask].tolist()):
        held.setdefault(s, set()).add(c)
    src_mask = source.labels == 1
    eval_pos: dict[int, list[int]] = {}
    for s, c in zip(source.subjects[src_mask].tolist(), source.codes[src_mask].tolist()):
        eval_pos.setdefault(s, []).append(c)

    rng = np.random.default_rng(seed)
    all_codes = np.arange(positives.n_codes)
    cases, skipped = [], 0
    for s in sorted(eval_pos):
        owned = held.get(s, set()) | set(eval_pos[s])
        free = all_codes[~np.isin(all_codes, list(owned))]
        if len(free) < n_candidates - 1:
            skipped += 1
            continue
        target = eval_pos[s][int(rng.integers(len(eval_pos[s])))]
        others = rng.choice(free, size=n_candidates - 1, replace=False)
        cases.append(HitRatioCase(s, int(target), (int(target), *map(int, others))))
    if skipped:
        log.info("hit-ratio: skipped %d subjects with fewer than %d non-positive codes", skipped, n_candidates - 1)
    return cases
