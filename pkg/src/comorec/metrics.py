"""Classification and ranking metrics: accuracy, macro/micro F1, ROC AUC, hit ratio@K."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .core import DataError


def _binary_pair(preds, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if len(p) != len(y):
        raise DataError(f"length mismatch: {len(p)} predictions vs {len(y)} labels")
    if len(y) == 0:
        raise DataError("empty input")
    return p.astype(np.int64), y.astype(np.int64)


def accuracy(preds, labels) -> float:
    p, y = _binary_pair(preds, labels)
    return float(np.count_nonzero(p == y)) / len(y)


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def f1_scores(preds, labels) -> tuple[float, float]:
    """``(macro_f1, micro_f1)`` over classes {0, 1}; undefined per-class F1 counts as 0."""
    p, y = _binary_pair(preds, labels)
    per_class, tp_all, fp_all, fn_all = [], 0, 0, 0
    for cls in (0, 1):
        tp = int(np.count_nonzero((p == cls) & (y == cls)))
        fp = int(np.count_nonzero((p == cls) & (y != cls)))
        fn = int(np.count_nonzero((p != cls) & (y == cls)))
        per_class.append(_f1(tp, fp, fn))
        tp_all, fp_all, fn_all = tp_all + tp, fp_all + fp, fn_all + fn
    return (per_class[0] + per_class[1]) / 2, _f1(tp_all, fp_all, fn_all)


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    mean_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(mean_rank, ends - starts)
    return ranks


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties counting one half."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if len(s) != len(y):
        raise DataError(f"length mismatch: {len(s)} scores vs {len(y)} labels")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC undefined: need both positive and negative labels")
    rank_sum = average_ranks(s)[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def held_out_rank(candidates: Sequence[int], scores: Sequence[float], target: int) -> int:
    """1-based rank of ``target`` by descending score, ties broken by code index."""
    cand = np.asarray(candidates)
    sc = np.asarray(scores, dtype=np.float64)
    where = np.flatnonzero(cand == target)
    if len(where) != 1:
        raise DataError(f"held-out code {target} must appear exactly once among candidates")
    t = sc[where[0]]
    ahead = np.count_nonzero(sc > t) + np.count_nonzero((sc == t) & (cand < target))
    return int(ahead) + 1


def hit_ratio_at_k(cases, scorer: Callable[[int, np.ndarray], np.ndarray], k: int = 10) -> float:
    """Fraction of cases whose held-out code ranks within the top ``k``.

    ``scorer(subject, candidate_codes)`` returns one score per candidate.
    """
    cases = list(cases)
    if not cases:
        raise DataError("no hit-ratio cases")
    hits = 0
    for case in cases:
        cand = np.asarray(case.candidates, dtype=np.int64)
        if k > len(cand):
            raise DataError(f"k={k} exceeds the {len(cand)} candidates per case")
        scores = np.asarray(scorer(case.subject, cand), dtype=np.float64)
        hits += held_out_rank(cand, scores, case.held_out_positive) <= k
    return hits / len(cases)


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    micro_f1: float
    auc: float | None
    n_pos: int
    n_neg: int
    hit_ratio_at_k: float | None = None
    k: int | None = None
    n_cases: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_scores(scores, labels, threshold: float = 0.5) -> EvalReport:
    """Classification metrics for one split; AUC is ``None`` when only one class is present."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(np.int64)
    preds = (s >= threshold).astype(np.int64)
    macro, micro = f1_scores(preds, y)
    n_pos = int(y.sum())
    auc = roc_auc(s, y) if 0 < n_pos < len(y) else None
    return EvalReport(accuracy(preds, y), macro, micro, auc, n_pos, len(y) - n_pos)
