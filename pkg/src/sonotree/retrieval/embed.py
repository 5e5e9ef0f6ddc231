"""Sentence embedding providers.

The builtin provider needs no pretrained weights: tokens are hashed into a
fixed number of signed buckets and weighted by TF-IDF, giving deterministic
unit vectors. The file provider consumes embeddings exported by an external
encoder, keyed by the 64-bit sentence hash.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..numerics import ContractViolation
from .text import hash64

DEFAULT_DIM = 768


class MissingEmbeddingError(KeyError):
    """File provider lacks embeddings for one or more sentence hashes."""


class BuiltinEmbedder:
    """Hashed TF-IDF: index = hash64(token) mod dim, sign from the top hash bit."""

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim
        self.doc_freq: dict = {}
        self.n_docs = 0

    def fit(self, token_lists) -> "BuiltinEmbedder":
        self.doc_freq = {}
        self.n_docs = len(token_lists)
        for tokens in token_lists:
            for tok in set(tokens):
                self.doc_freq[tok] = self.doc_freq.get(tok, 0) + 1
        return self

    @classmethod
    def from_stats(cls, dim: int, doc_freq: dict, n_docs: int) -> "BuiltinEmbedder":
        emb = cls(dim=dim)
        emb.doc_freq = dict(doc_freq)
        emb.n_docs = n_docs
        return emb

    def idf(self, token: str) -> float:
        df = self.doc_freq.get(token, 0)
        return math.log((1 + self.n_docs) / (1 + df)) + 1.0

    def embed(self, tokens) -> np.ndarray:
        vec = np.zeros(self.dim)
        if not tokens:
            return vec
        counts: dict = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for tok, tf in counts.items():
            h = hash64(tok)
            sign = 1.0 if (h >> 63) == 0 else -1.0
            vec[h % self.dim] += sign * tf * self.idf(tok)
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


class FileEmbeddingProvider:
    """Reads embeddings.jsonl rows {hash, dim, values} keyed by sentence hash."""

    def __init__(self, path):
        self.path = Path(path)
        self._table: dict = {}
        self.dim = None
        with self.path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                vec = np.asarray(obj["values"], dtype=np.float64)
                if self.dim is None:
                    self.dim = int(obj["dim"])
                elif int(obj["dim"]) != self.dim:
                    raise ContractViolation(
                        f"embedding file mixes dims {self.dim} and {obj['dim']}")
                if vec.shape[0] != self.dim:
                    raise ContractViolation(
                        f"embedding for {obj['hash']} has wrong length")
                self._table[int(obj["hash"])] = vec

    def lookup(self, sentence_hashes) -> np.ndarray:
        missing = [h for h in sentence_hashes if h not in self._table]
        if missing:
            raise MissingEmbeddingError(
                "missing embeddings for hashes: "
                + ", ".join(str(h) for h in missing))
        return np.stack([self._table[h] for h in sentence_hashes])


def embed_sentences(sentences, provider) -> np.ndarray:
    """(n, dim) matrix for Sentence objects via either provider type."""
    if isinstance(provider, FileEmbeddingProvider):
        return provider.lookup([hash64(s.cleaned) for s in sentences])
    return np.stack([provider.embed(s.tokens) for s in sentences])
