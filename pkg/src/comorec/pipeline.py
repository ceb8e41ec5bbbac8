"""End-to-end experiment wiring: files -> interactions -> splits -> model -> report."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import DataError, Encoder, InteractionSet
from .ingest import (
    DEFAULT_EXCLUDED_CATEGORIES,
    DiagnosisRow,
    NoteRow,
    build_positive_set,
    filter_top_k_codes,
)
from .metrics import evaluate_scores, hit_ratio_at_k
from .models import NcfModel, SymptomResolver, TrainConfig, score_candidates, train
from .notes_nlp import Lexicon, build_subject_symptom_table
from .sampling import SplitSpec, build_hitratio_cases, generate_negative_pairs, generate_negative_triples, split

log = logging.getLogger(__name__)


@dataclass
class DataConfig:
    """How a dataset is derived from raw tables; stored with a model so evaluation can rebuild it."""

    model_kind: str = "ncf"
    neg_ratio: int = 4
    seed: int = 0
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    top_k_codes: Optional[int] = None
    max_notes: Optional[int] = None
    excluded_categories: list[str] = field(default_factory=lambda: sorted(DEFAULT_EXCLUDED_CATEGORIES))

    def __post_init__(self):
        if self.model_kind not in ("ncf", "dhf"):
            raise ValueError(f"model_kind must be 'ncf' or 'dhf', got {self.model_kind!r}")
        self.split = tuple(float(f) for f in self.split)
        SplitSpec(*self.split)

    def seeds(self) -> dict[str, int]:
        """Independent sub-seeds for each random stage."""
        names = ("negatives", "split", "train", "hit_ratio")
        state = np.random.SeedSequence(self.seed).generate_state(len(names))
        return {n: int(s) for n, s in zip(names, state)}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d


@dataclass
class Dataset:
    positives: InteractionSet
    data: InteractionSet
    train: InteractionSet
    validation: InteractionSet
    test: InteractionSet
    encoders: dict[str, Encoder]
    symptom_table: Optional[dict[int, list[int]]] = None
    coverage: Optional[float] = None


def prepare_dataset(
    cfg: DataConfig,
    diagnoses: list[DiagnosisRow],
    notes: Optional[list[NoteRow]] = None,
    lexicon: Optional[Lexicon] = None,
    encoders: Optional[dict[str, Encoder]] = None,
) -> Dataset:
    """Filter, encode, sample negatives and split. ``encoders`` pins the vocabularies of a saved model."""
    encoders = encoders or {}
    coverage = None
    if cfg.top_k_codes is not None:
        diagnoses, coverage = filter_top_k_codes(diagnoses, cfg.top_k_codes)
        log.info("top-%d codes cover %.1f%% of diagnosis rows", cfg.top_k_codes, 100 * coverage)
    positives, subj_enc, code_enc = build_positive_set(diagnoses, encoders.get("subject"), encoders.get("code"))
    seeds = cfg.seeds()
    out_enc = {"subject": subj_enc, "code": code_enc}
    table = None
    if cfg.model_kind == "dhf":
        if notes is None or lexicon is None:
            raise DataError("dhf needs notes and a lexicon")
        table, sym_enc = build_subject_symptom_table(notes, lexicon, subj_enc, encoders.get("symptom"))
        out_enc["symptom"] = sym_enc
        data = generate_negative_triples(positives, table, cfg.neg_ratio, seeds["negatives"], n_symptoms=len(sym_enc))
    else:
        data = generate_negative_pairs(positives, cfg.neg_ratio, seeds["negatives"])
    log.info(
        "%d subjects, %d codes, %d positives, %d negatives",
        data.n_subjects,
        data.n_codes,
        data.n_positive,
        data.n_negative,
    )
    tr, va, te = split(data, SplitSpec(*cfg.split, seed=seeds["split"]))
    return Dataset(positives, data, tr, va, te, out_enc, table, coverage)


def fit(cfg: DataConfig, train_cfg: TrainConfig, ds: Dataset, extras: Optional[dict] = None):
    train_cfg = TrainConfig(**{**asdict(train_cfg), "seed": cfg.seeds()["train"], "neg_ratio": cfg.neg_ratio})
    return train(train_cfg, ds.train, ds.validation, encoders=ds.encoders, extras=extras)


def make_scorer(model: NcfModel, symptom_table: Optional[dict] = None, seed: int = 0):
    resolver = SymptomResolver(symptom_table, seed) if model.kind == "dhf" else None

    def scorer(subject: int, codes: np.ndarray) -> np.ndarray:
        ranked = dict(score_candidates(model, subject, codes, resolver))
        return np.array([ranked[int(c)] for c in codes])

    return scorer


def evaluate(model: NcfModel, ds: Dataset, k: int = 10, n_candidates: int = 100, seed: int = 0) -> dict:
    """Per-split accuracy/F1, test AUC and micro F1, and hit ratio@k on test positives."""
    report: dict = {}
    for name, part in (("train", ds.train), ("validation", ds.validation), ("test", ds.test)):
        split_report = evaluate_scores(model.predict_set(part), part.labels).to_dict()
        for key in ("hit_ratio_at_k", "k", "n_cases"):
            del split_report[key]
        report[name] = split_report
    if n_candidates > ds.positives.n_codes:
        raise DataError(
            f"{n_candidates} hit-ratio candidates requested but only {ds.positives.n_codes} codes exist; "
            "lower --n-candidates"
        )
    cases = build_hitratio_cases(ds.positives, n_candidates, seed=seed, held_out_from=ds.test.positives())
    hr = hit_ratio_at_k(cases, make_scorer(model, ds.symptom_table, seed), k) if cases else None
    report["test_auc"] = report["test"]["auc"]
    report["test_micro_f1"] = report["test"]["micro_f1"]
    report["hit_ratio_at_k"] = hr
    report["k"] = k
    report["n_candidates"] = n_candidates
    report["n_cases"] = len(cases)
    if ds.coverage is not None:
        report["top_k_coverage"] = ds.coverage
    return report
