"""Comorbidity prediction as implicit-feedback recommendation (NCF and deep hybrid filtering)."""

from .core import DataError, Encoder, Interaction, InteractionSet, ModelFileError, NumericError, SchemaError, fit_encoder
from .models import DhfModel, NcfModel, TrainConfig, TrainHistory, load_model, save_model, score_candidates, train

__all__ = [
    "DataError",
    "DhfModel",
    "Encoder",
    "Interaction",
    "InteractionSet",
    "ModelFileError",
    "NcfModel",
    "NumericError",
    "SchemaError",
    "TrainConfig",
    "TrainHistory",
    "fit_encoder",
    "load_model",
    "save_model",
    "score_candidates",
    "train",
]

__version__ = "0.1.0"
