"""Convolutional regression of registration smoothness from image pairs."""

from .model import NetworkSpec, TwoStreamRegressor, load_model, save_model
from .predict import corpus_rows, predict_pairs, write_predictions
from .records import CorpusError, load_manifest, load_split, read_record
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "CorpusError",
    "NetworkSpec",
    "TrainConfig",
    "TwoStreamRegressor",
    "corpus_rows",
    "load_manifest",
    "load_model",
    "load_split",
    "predict_pairs",
    "read_record",
    "save_model",
    "train",
    "write_predictions",
]
