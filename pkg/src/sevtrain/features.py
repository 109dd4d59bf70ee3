"""Hashed n-gram features for the native linear classifier.

Tokens are the lowercased, Unicode-whitespace-split words of a cleaned text,
truncated to the first ``max_tokens`` tokens. Each n-gram is hashed with
BLAKE2b (8-byte digest) personalized by its n-gram order, so unigram and
bigram index spaces are salted independently; indices are the 64-bit digest
modulo ``dim``. Counts are term frequencies, L2-normalized at the end.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError

DEFAULT_DIM = 2**18


@dataclass(frozen=True)
class FeatureConfig:
    ngram_orders: tuple[int, ...] = (1, 2)
    dim: int = DEFAULT_DIM
    max_tokens: int = 256

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ConfigError("feature dim must be positive")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be positive")
        if not self.ngram_orders or any(o < 1 for o in self.ngram_orders):
            raise ConfigError("ngram orders must be positive integers")
        object.__setattr__(self, "ngram_orders", tuple(self.ngram_orders))

    def to_json(self) -> dict:
        return {
            "ngram_orders": list(self.ngram_orders),
            "dim": self.dim,
            "max_tokens": self.max_tokens,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureConfig":
        return cls(
            ngram_orders=tuple(obj["ngram_orders"]),
            dim=int(obj["dim"]),
            max_tokens=int(obj["max_tokens"]),
        )


@dataclass(frozen=True)
class FeatureVector:
    """Sparse L2-normalized vector: unique ascending indices in [0, dim)."""

    indices: np.ndarray  # int64
    values: np.ndarray  # float64
    dim: int


@lru_cache(maxsize=1 << 20)
def _hash_ngram(ngram: str, order: int) -> int:
    digest = hashlib.blake2b(
        ngram.encode("utf-8"), digest_size=8, person=b"ngram-%d" % order
    ).digest()
    return int.from_bytes(digest, "little")


def featurize(text: str, cfg: FeatureConfig = FeatureConfig()) -> FeatureVector:
    """Hash a cleaned text into a sparse TF vector, then L2-normalize."""
    tokens = text.lower().split()[: cfg.max_tokens]
    counts: Counter[int] = Counter()
    for order in cfg.ngram_orders:
        for i in range(len(tokens) - order + 1):
            gram = tokens[i] if order == 1 else " ".join(tokens[i : i + order])
            counts[_hash_ngram(gram, order) % cfg.dim] += 1
    if not counts:
        return FeatureVector(
            np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64), cfg.dim
        )
    indices = np.fromiter(sorted(counts), dtype=np.int64, count=len(counts))
    values = np.array([counts[i] for i in indices], dtype=np.float64)
    values /= np.linalg.norm(values)
    return FeatureVector(indices, values, cfg.dim)
