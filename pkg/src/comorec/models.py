"""NCF and DHF recommenders built on the numpy neural core.

NCF scores a (subject, code) pair; DHF adds a note-derived symptom as a
third embedded input. Both concatenate the embeddings and pass them
through a ReLU tower to one sigmoid output.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DataError, Encoder, InteractionSet, ModelFileError, NumericError
from .neuralnet import Adam, DenseLayer, EmbeddingNetwork, EmbeddingTable, bce_loss

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    embedding_dim: int = 8
    hidden_sizes: tuple[int, ...] = (64, 32)
    epochs: int = 20
    batch_size: int = 256
    learning_rate: float = 1e-3
    neg_ratio: int = 4
    seed: int = 0
    early_stopping_patience: Optional[int] = None

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        for name in ("embedding_dim", "batch_size", "neg_ratio"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")
        if self.early_stopping_patience is not None and self.early_stopping_patience < 1:
            raise ValueError("early_stopping_patience must be positive")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    validation_loss: list[float] = field(default_factory=list)
    validation_accuracy: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_loss)

    def to_dict(self) -> dict:
        return asdict(self)


class NcfModel:
    """Neural collaborative filtering over (subject, code) pairs."""

    kind = "ncf"
    n_inputs = 2

    def __init__(self, network: EmbeddingNetwork, encoders: Optional[dict[str, Encoder]] = None, extras: Optional[dict] = None):
        if len(network.tables) != self.n_inputs:
            raise ValueError(f"{self.kind} needs {self.n_inputs} embedding tables, got {len(network.tables)}")
        self.network = network
        self.encoders = dict(encoders or {})
        self.extras = dict(extras or {})

    @classmethod
    def build(cls, vocab_sizes: Sequence[int], embedding_dim: int = 8, hidden_sizes=(64, 32), seed: int = 0, **kw):
        return cls(EmbeddingNetwork.build(vocab_sizes, embedding_dim, hidden_sizes, seed), **kw)

    @property
    def subject_embedding(self) -> EmbeddingTable:
        return self.network.tables[0]

    @property
    def code_embedding(self) -> EmbeddingTable:
        return self.network.tables[1]

    @property
    def layers(self) -> list[DenseLayer]:
        return self.network.layers

    @property
    def embedding_dim(self) -> int:
        return self.subject_embedding.dim

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(layer.n_out for layer in self.layers[:-1])

    @property
    def vocab_sizes(self) -> tuple[int, ...]:
        return tuple(t.rows for t in self.network.tables)

    def predict(self, index) -> np.ndarray:
        """Probabilities for rows of (subject, code[, symptom]) indices."""
        return self.network.predict(index)

    def predict_set(self, data: InteractionSet) -> np.ndarray:
        return self.predict(_inputs_for(self, data))

    def __call__(self, *idx: int) -> float:
        return float(self.predict(np.array([idx]))[0])


class DhfModel(NcfModel):
    """Deep hybrid filtering: NCF plus a third embedding for a note-derived term."""

    kind = "dhf"
    n_inputs = 3

    @property
    def symptom_embedding(self) -> EmbeddingTable:
        return self.network.tables[2]


MODEL_KINDS = {"ncf": NcfModel, "dhf": DhfModel}


def ncf_forward(m: NcfModel, s: int, c: int) -> float:
    return m(s, c)


def dhf_forward(m: DhfModel, s: int, c: int, m_idx: int) -> float:
    return m(s, c, m_idx)


def _inputs_for(model: NcfModel, data: InteractionSet) -> np.ndarray:
    if (model.kind == "dhf") != data.has_symptoms:
        raise DataError(f"{model.kind} model cannot score a {'triple' if data.has_symptoms else 'pair'} dataset")
    return data.index_matrix()


def _check_cardinalities(model: NcfModel, data: InteractionSet) -> None:
    need = (data.n_subjects, data.n_codes) + ((data.n_symptoms,) if data.has_symptoms else ())
    if tuple(model.vocab_sizes) != need:
        raise DataError(f"dataset cardinalities {need} do not match model vocabulary sizes {model.vocab_sizes}")


def _accuracy(p: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((p >= 0.5) == (y == 1)))


def train(
    config: TrainConfig,
    train_set: InteractionSet,
    validation_set: Optional[InteractionSet] = None,
    encoders: Optional[dict[str, Encoder]] = None,
    extras: Optional[dict] = None,
):
    """Mini-batch Adam on mean BCE. Returns ``(model, history)``.

    The model kind follows the dataset: triples train a DHF model, pairs an
    NCF model. The final-epoch model is returned unless early stopping is
    enabled, in which case the parameters with the best validation loss are
    restored.
    """
    if len(train_set) == 0:
        raise DataError("empty training set")
    if validation_set is not None and len(validation_set) == 0:
        raise DataError("empty validation set")
    kind = "dhf" if train_set.has_symptoms else "ncf"
    vocab = (train_set.n_subjects, train_set.n_codes) + ((train_set.n_symptoms,) if kind == "dhf" else ())
    seeds = np.random.SeedSequence(config.seed).generate_state(2)
    model = MODEL_KINDS[kind].build(
        vocab, config.embedding_dim, config.hidden_sizes, seed=int(seeds[0]), encoders=encoders, extras=extras
    )
    history = TrainHistory()
    if validation_set is not None:
        _check_cardinalities(model, validation_set)

    net = model.network
    params = net.parameters()
    opt = Adam(learning_rate=config.learning_rate)
    rng = np.random.default_rng(seeds[1])
    x_all = train_set.index_matrix()
    y_all = train_set.labels.astype(np.float64)
    n = len(y_all)
    best = (math.inf, None)
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = net.loss_and_grads(x_all[batch], y_all[batch])
            if not math.isfinite(loss):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}; "
                    f"try a smaller learning rate than {config.learning_rate:g}"
                )
            loss_sum += loss * len(batch)
            opt.step(params, grads)
        if not all(np.isfinite(p).all() for p in params.values()):
            raise NumericError(f"non-finite parameters after epoch {epoch}; try a smaller learning rate")
        p_train = net.predict(x_all)
        history.train_loss.append(loss_sum / n)
        history.train_accuracy.append(_accuracy(p_train, y_all))
        if validation_set is not None:
            p_val = model.predict_set(validation_set)
            val_loss = float(np.mean(bce_loss(p_val, validation_set.labels)))
            history.validation_loss.append(val_loss)
            history.validation_accuracy.append(_accuracy(p_val, validation_set.labels))
        log.info(
            "epoch %d/%d loss=%.4f acc=%.4f%s",
            epoch,
            config.epochs,
            history.train_loss[-1],
            history.train_accuracy[-1],
            f" val_acc={history.validation_accuracy[-1]:.4f}" if validation_set is not None else "",
        )
        if config.early_stopping_patience and validation_set is not None:
            if history.validation_loss[-1] < best[0]:
                best = (history.validation_loss[-1], copy.deepcopy(net))
                stale = 0
            else:
                stale += 1
                if stale >= config.early_stopping_patience:
                    log.info("early stopping after epoch %d", epoch)
                    break
    if best[1] is not None:
        model.network = best[1]
    return model, history


class SymptomResolver:
    """Seeded uniform choice of one symptom per subject, independent of call order."""

    def __init__(self, table: dict[int, list[int]], seed: int = 0):
        self.table = table
        self.seed = seed

    def __call__(self, subject: int) -> int:
        options = self.table.get(int(subject))
        if not options:
            raise DataError(f"subject index {subject} has no note-derived terms")
        rng = np.random.default_rng([self.seed, int(subject)])
        return int(options[int(rng.integers(len(options)))])


def score_candidates(
    model: NcfModel,
    subject: int,
    codes: Sequence[int],
    symptom_resolver: Optional[Callable[[int], int]] = None,
) -> list[tuple[int, float]]:
    """Score ``codes`` for ``subject``; sorted by descending probability, ties by code index."""
    codes = [int(c) for c in codes]
    if not codes:
        raise DataError("empty candidate list")
    cols = [np.full(len(codes), int(subject)), np.array(codes)]
    if model.kind == "dhf":
        if symptom_resolver is None:
            raise DataError("DHF scoring needs a symptom resolver")
        cols.append(np.full(len(codes), symptom_resolver(subject)))
    probs = model.predict(np.stack(cols, axis=1))
    ranked = sorted(zip(codes, probs.tolist()), key=lambda cp: (-cp[1], cp[0]))
    return ranked


def model_to_dict(model: NcfModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "model_kind": model.kind,
        "embedding_dim": model.embedding_dim,
        "hidden_sizes": list(model.hidden_sizes),
        "vocab_sizes": list(model.vocab_sizes),
        "encoders": {name: list(enc.backward) for name, enc in model.encoders.items()},
        "parameters": {name: arr.tolist() for name, arr in model.network.parameters().items()},
        "extras": model.extras,
    }


def model_from_dict(d: dict) -> NcfModel:
    try:
        version = d["format_version"]
        if version != FORMAT_VERSION:
            raise ModelFileError(f"unsupported model format_version {version!r} (expected {FORMAT_VERSION})")
        cls = MODEL_KINDS[d["model_kind"]]
        dim = int(d["embedding_dim"])
        hidden = [int(h) for h in d["hidden_sizes"]]
        vocab = [int(v) for v in d["vocab_sizes"]]
        raw = d["parameters"]
        if len(vocab) != cls.n_inputs:
            raise ModelFileError(f"{d['model_kind']} model needs {cls.n_inputs} vocabularies, file has {len(vocab)}")
        tables = []
        for i, rows in enumerate(vocab):
            arr = np.array(raw[f"embedding{i}"], dtype=np.float64)
            if arr.shape != (rows, dim):
                raise ModelFileError(f"embedding{i} has shape {arr.shape}, expected {(rows, dim)}")
            tables.append(EmbeddingTable(arr))
        widths = [dim * len(vocab), *hidden, 1]
        layers = []
        for i, (a, b) in enumerate(zip(widths, widths[1:])):
            w = np.array(raw[f"dense{i}.weights"], dtype=np.float64)
            bias = np.array(raw[f"dense{i}.bias"], dtype=np.float64)
            if w.shape != (b, a) or bias.shape != (b,):
                raise ModelFileError(f"dense{i} has shapes {w.shape}/{bias.shape}, expected {(b, a)}/{(b,)}")
            layers.append(DenseLayer(w, bias, "sigmoid" if i == len(widths) - 2 else "relu"))
        encoders = {name: Encoder(ids) for name, ids in d.get("encoders", {}).items()}
        for name, size in zip(("subject", "code", "symptom"), vocab):
            if name in encoders and len(encoders[name]) != size:
                raise ModelFileError(f"{name} encoder has {len(encoders[name])} entries, expected {size}")
        return cls(EmbeddingNetwork(tables, layers), encoders=encoders, extras=d.get("extras", {}))
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ModelFileError(f"malformed model file: {exc!r}") from None


def save_model(model: NcfModel, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, separators=(",", ":"), allow_nan=False)
        fh.write("\n")
    os.replace(tmp, path)


def load_model(path) -> NcfModel:
    try:
        with Path(path).open(encoding="utf-8") as fh:
            d = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFileError(f"{path}: corrupt model file ({exc})") from None
    if not isinstance(d, dict):
        raise ModelFileError(f"{path}: corrupt model file (not a JSON object)")
    return model_from_dict(d)
