"""Text-to-speech-unit toolkit: k-means speech units, a byte-level text-to-unit
predictor, and UER/CER/SDR evaluation."""

from __future__ import annotations

__version__ = "0.1.0"

from .corpus import FeatureMatrix, Utterance, Waveform
from .quantizer import Codebook, KmeansConfig, assign, kmeans_fit
from .units import dedup, levenshtein, rle_encode, rle_expand, uer

__all__ = [
    "Codebook",
    "FeatureMatrix",
    "KmeansConfig",
    "Utterance",
    "Waveform",
    "assign",
    "dedup",
    "kmeans_fit",
    "levenshtein",
    "rle_encode",
    "rle_expand",
    "uer",
]
