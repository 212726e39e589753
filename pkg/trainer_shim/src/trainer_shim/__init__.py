"""Toy fine-tuning shim: train a small stand-in chat model on exported
prompt/reference pairs and serve it behind the standard chat wire protocol."""

from .data import Pair, Vocab, load_pairs
from .train import TrainConfig, TrainResult, train

__all__ = ["Pair", "Vocab", "load_pairs", "TrainConfig", "TrainResult", "train"]
