"""Byte-level encoder-decoder that predicts deduplicated unit sequences from text."""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import ModelConfig, Seq2SeqModel
from .tokenizer import byte_tokenize, encode_units_target
from .training import TrainConfig, train

__all__ = [
    "ModelConfig",
    "Seq2SeqModel",
    "TrainConfig",
    "byte_tokenize",
    "encode_units_target",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
