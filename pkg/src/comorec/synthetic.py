"""Seeded generator of MIMIC-shaped diagnosis and note tables with planted comorbidity clusters."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .ingest import DiagnosisRow, NoteRow, write_diagnoses, write_notes
from .notes_nlp import Lexicon, default_lexicon

NOTE_CATEGORIES = ("Nursing/other", "Radiology", "Physician", "Nursing", "ECG")
_OPENERS = (
    "Pt seen and examined on rounds.",
    "Patient resting in bed, family at bedside.",
    "Interval events reviewed with team.",
    "Overnight events unremarkable per staff.",
)


@dataclass(frozen=True)
class SyntheticConfig:
    n_subjects: int = 1000
    n_codes: int = 60
    n_clusters: int = 6
    p_in: float = 0.6
    p_out: float = 0.05
    symptoms_per_cluster: int = 5
    symptom_noise: float = 0.1
    seed: int = 0
    max_admissions: int = 3

    def __post_init__(self):
        if self.n_subjects < 1 or self.n_codes < 1 or self.n_clusters < 1:
            raise ValueError("n_subjects, n_codes and n_clusters must be positive")
        if self.n_clusters > min(self.n_subjects, self.n_codes):
            raise ValueError("n_clusters must not exceed min(n_subjects, n_codes)")
        if not 0.0 <= self.p_out < self.p_in <= 1.0:
            raise ValueError("need 0 <= p_out < p_in <= 1")
        if self.symptoms_per_cluster < 1:
            raise ValueError("symptoms_per_cluster must be positive")
        if not 0.0 <= self.symptom_noise <= 1.0:
            raise ValueError("symptom_noise must be in [0, 1]")
        if self.max_admissions < 1:
            raise ValueError("max_admissions must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synthetic config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def code_name(i: int) -> str:
    # ICD-9-looking identifiers, unique per index
    return f"{100 + i // 10:03d}.{i % 10}"


def subject_name(i: int) -> str:
    return str(10001 + i)


def _assign_clusters(n: int, k: int, rng) -> np.ndarray:
    # every cluster non-empty: round-robin labels, shuffled
    return rng.permutation(np.arange(n) % k)


def generate(config: SyntheticConfig = SyntheticConfig(), lexicon: Optional[Lexicon] = None):
    """Return ``(diagnosis rows, note rows, truth)`` for ``config``.

    Subjects and codes each belong to one cluster. A subject holds every
    same-cluster code with probability ``p_in`` and every other code with
    probability ``p_out``. Each subject gets one note naming some of its
    cluster's symptom terms, plus one off-cluster term with probability
    ``symptom_noise``.
    """
    lexicon = lexicon or default_lexicon()
    rng = np.random.default_rng(config.seed)
    symptom_terms = sorted(t for t, kind in lexicon.terms.items() if kind == "symptom")
    need = config.n_clusters * config.symptoms_per_cluster
    if need > len(symptom_terms):
        raise ValueError(f"lexicon has {len(symptom_terms)} symptom terms, config needs {need}")

    subj_cluster = _assign_clusters(config.n_subjects, config.n_clusters, rng)
    code_cluster = _assign_clusters(config.n_codes, config.n_clusters, rng)
    picked = rng.choice(len(symptom_terms), size=need, replace=False)
    cluster_terms = [
        [symptom_terms[j] for j in picked[k * config.symptoms_per_cluster : (k + 1) * config.symptoms_per_cluster]]
        for k in range(config.n_clusters)
    ]

    probs = np.where(subj_cluster[:, None] == code_cluster[None, :], config.p_in, config.p_out)
    holds = rng.random((config.n_subjects, config.n_codes)) < probs

    diagnoses: list[DiagnosisRow] = []
    notes: list[NoteRow] = []
    next_hadm = 100001
    per_note = min(3, config.symptoms_per_cluster)
    for s in range(config.n_subjects):
        sid = subject_name(s)
        n_adm = int(rng.integers(1, config.max_admissions + 1))
        hadms = [str(next_hadm + a) for a in range(n_adm)]
        next_hadm += n_adm
        codes = np.flatnonzero(holds[s])
        adm_of = rng.integers(0, n_adm, size=len(codes))
        for a in range(n_adm):
            for c in codes[adm_of == a]:
                diagnoses.append(DiagnosisRow(sid, hadms[a], code_name(int(c))))

        k = int(subj_cluster[s])
        own = [cluster_terms[k][j] for j in rng.choice(config.symptoms_per_cluster, size=per_note, replace=False)]
        sentences = [_OPENERS[int(rng.integers(len(_OPENERS)))], f"Complains of {own[0]}."]
        if len(own) > 1:
            sentences.append("Exam notable for " + " and ".join(own[1:]) + ".")
        if config.n_clusters > 1 and rng.random() < config.symptom_noise:
            other = int(rng.choice([c for c in range(config.n_clusters) if c != k]))
            noise = cluster_terms[other][int(rng.integers(config.symptoms_per_cluster))]
            sentences.append(f"Intermittent {noise} reported.")
        category = NOTE_CATEGORIES[int(rng.integers(len(NOTE_CATEGORIES)))]
        notes.append(NoteRow(sid, hadms[int(rng.integers(n_adm))], category, " ".join(sentences)))

    truth = {
        "config": config.to_dict(),
        "subject_cluster": {subject_name(s): int(k) for s, k in enumerate(subj_cluster)},
        "code_cluster": {code_name(c): int(k) for c, k in enumerate(code_cluster)},
        "cluster_terms": cluster_terms,
    }
    return diagnoses, notes, truth


def write_dataset(out_dir, config: SyntheticConfig = SyntheticConfig(), lexicon: Optional[Lexicon] = None) -> dict[str, Path]:
    """Write ``diagnoses.csv``, ``notes.csv`` and ``truth.json`` into ``out_dir``."""
    diagnoses, notes, truth = generate(config, lexicon)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"diagnoses": out / "diagnoses.csv", "notes": out / "notes.csv", "truth": out / "truth.json"}
    write_diagnoses(diagnoses, paths["diagnoses"])
    write_notes(notes, paths["notes"])
    paths["truth"].write_text(json.dumps(truth, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return paths
