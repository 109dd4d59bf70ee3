"""Transformer backend for the sevtrain classifier wire protocol."""

from .model import FIT_DEFAULTS, LABELS, N_CLASSES, Runtime, read_labeled_jsonl
from .worker import DEFAULT_MODEL, PROTOCOL_VERSION, main, serve

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_MODEL",
    "FIT_DEFAULTS",
    "LABELS",
    "N_CLASSES",
    "PROTOCOL_VERSION",
    "Runtime",
    "main",
    "read_labeled_jsonl",
    "serve",
]
