import json

import numpy as np
import pytest

from comorec.core import fit_encoder
from comorec.ingest import build_positive_set, load_diagnoses, load_notes, write_diagnoses, write_notes
from comorec.notes_nlp import build_subject_symptom_table, default_lexicon
from comorec.synthetic import SyntheticConfig, code_name, generate, write_dataset


def _matrix(diagnoses):
    pos, s_enc, c_enc = build_positive_set(diagnoses)
    m = np.zeros((len(s_enc), len(c_enc)), dtype=bool)
    m[pos.subjects, pos.codes] = True
    return m, s_enc, c_enc


def test_block_diagonal_when_noise_free():
    cfg = SyntheticConfig(n_subjects=60, n_codes=20, n_clusters=4, p_in=1.0, p_out=0.0, seed=1)
    diagnoses, _, truth = generate(cfg)
    m, s_enc, c_enc = _matrix(diagnoses)
    sc = np.array([truth["subject_cluster"][s] for s in s_enc.backward])
    cc = np.array([truth["code_cluster"][c] for c in c_enc.backward])
    assert np.array_equal(m, sc[:, None] == cc[None, :])
    assert len(s_enc) == 60 and len(c_enc) == 20


def test_within_cluster_rate_near_p_in():
    cfg = SyntheticConfig(n_subjects=600, n_codes=30, n_clusters=3, p_in=0.6, p_out=0.05, seed=2)
    diagnoses, _, truth = generate(cfg)
    held = {(d.subject_id, d.icd9_code) for d in diagnoses}
    inside = outside = n_in = n_out = 0
    for s, ks in truth["subject_cluster"].items():
        for c, kc in truth["code_cluster"].items():
            if ks == kc:
                n_in += 1
                inside += (s, c) in held
            else:
                n_out += 1
                outside += (s, c) in held
    assert abs(inside / n_in - 0.6) <= 0.05
    assert abs(outside / n_out - 0.05) <= 0.05


def test_clusters_all_nonempty():
    _, _, truth = generate(SyntheticConfig(n_subjects=12, n_codes=6, n_clusters=6, seed=4))
    assert set(truth["code_cluster"].values()) == set(range(6))
    assert set(truth["subject_cluster"].values()) == set(range(6))


def test_same_seed_byte_identical(tmp_path):
    cfg = SyntheticConfig(n_subjects=50, n_codes=20, n_clusters=2, seed=9)
    a = write_dataset(tmp_path / "a", cfg)
    b = write_dataset(tmp_path / "b", cfg)
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()
    c = write_dataset(tmp_path / "c", SyntheticConfig(n_subjects=50, n_codes=20, n_clusters=2, seed=10))
    assert c["diagnoses"].read_bytes() != a["diagnoses"].read_bytes()


def test_ingest_round_trip_lossless(tmp_path, small_config):
    paths = write_dataset(tmp_path, small_config)
    diagnoses = load_diagnoses(paths["diagnoses"])
    notes = load_notes(paths["notes"], excluded_categories=())
    write_diagnoses(diagnoses, tmp_path / "d2.csv")
    write_notes(notes, tmp_path / "n2.csv")
    assert (tmp_path / "d2.csv").read_bytes() == paths["diagnoses"].read_bytes()
    assert (tmp_path / "n2.csv").read_bytes() == paths["notes"].read_bytes()
    gen_d, gen_n, _ = generate(small_config)
    assert diagnoses == gen_d and notes == gen_n


def test_extracted_terms_match_cluster_when_noise_free(small_config):
    cfg = SyntheticConfig(**{**small_config.to_dict(), "symptom_noise": 0.0})
    diagnoses, notes, truth = generate(cfg)
    s_enc = fit_encoder(d.subject_id for d in diagnoses)
    table, sym_enc = build_subject_symptom_table(notes, default_lexicon(), s_enc)
    for s_idx, terms in table.items():
        sid = s_enc.decode(s_idx)
        own = set(truth["cluster_terms"][truth["subject_cluster"][sid]])
        assert {sym_enc.decode(t) for t in terms} <= own
        assert len(terms) == 3


def test_noise_adds_off_cluster_terms():
    cfg = SyntheticConfig(n_subjects=300, n_codes=12, n_clusters=3, symptom_noise=1.0, seed=5)
    diagnoses, notes, truth = generate(cfg)
    s_enc = fit_encoder(d.subject_id for d in diagnoses)
    table, sym_enc = build_subject_symptom_table(notes, default_lexicon(), s_enc)
    foreign = 0
    for s_idx, terms in table.items():
        own = set(truth["cluster_terms"][truth["subject_cluster"][s_enc.decode(s_idx)]])
        foreign += any(sym_enc.decode(t) not in own for t in terms)
    assert foreign == len(table)


def test_truth_json_and_names(tmp_path):
    paths = write_dataset(tmp_path, SyntheticConfig(n_subjects=10, n_codes=5, n_clusters=2, seed=0))
    truth = json.loads(paths["truth"].read_text())
    assert truth["config"]["n_subjects"] == 10
    assert sorted(truth["code_cluster"]) == [code_name(i) for i in range(5)]
    assert code_name(0) == "100.0" and code_name(59) == "105.9"


@pytest.mark.parametrize(
    "bad",
    [
        {"n_subjects": 0},
        {"n_clusters": 100},
        {"p_in": 0.05, "p_out": 0.05},
        {"p_in": 1.5},
        {"symptom_noise": -0.1},
        {"symptoms_per_cluster": 0},
        {"max_admissions": 0},
    ],
)
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SyntheticConfig(**bad)


def test_config_unknown_keys():
    with pytest.raises(ValueError, match="unknown"):
        SyntheticConfig.from_dict({"n_subject": 5})
    assert SyntheticConfig.from_dict({"seed": 3}).seed == 3


def test_too_many_symptoms_for_lexicon():
    with pytest.raises(ValueError, match="symptom terms"):
        generate(SyntheticConfig(n_subjects=100, n_codes=60, n_clusters=60, symptoms_per_cluster=5))


def test_planted_structure_auc_ceiling():
    # scoring test pairs by their true holding probability is the best any
    # model without pair memorisation can do; on the default config it sits near 0.81
    from comorec.metrics import roc_auc
    from comorec.pipeline import DataConfig, prepare_dataset

    cfg = SyntheticConfig()
    diagnoses, _, truth = generate(cfg)
    aucs = []
    for seed in (0, 1, 2):
        ds = prepare_dataset(DataConfig(seed=seed), diagnoses)
        sc = np.array([truth["subject_cluster"][s] for s in ds.encoders["subject"].backward])
        cc = np.array([truth["code_cluster"][c] for c in ds.encoders["code"].backward])
        te = ds.test
        score = np.where(sc[te.subjects] == cc[te.codes], cfg.p_in, cfg.p_out)
        aucs.append(roc_auc(score, te.labels))
    assert 0.78 < np.mean(aucs) < 0.84
