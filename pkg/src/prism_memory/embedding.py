"""Signed feature-hashing embedder and exact cosine top-k."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Protocol, Sequence

import numpy as np

from .entropy import Content, as_tokens
from .errors import EmptyContent


@lru_cache(maxsize=65536)
def _bucket(token: str, seed: int, dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little", signed=True)
    ).digest()
    h = int.from_bytes(digest, "little")
    return h % dim, (1.0 if (h >> 63) & 1 == 0 else -1.0)


@dataclass(frozen=True)
class Embedder:
    dim: int = 256
    seed: int = 0

    def embed(self, content: Content) -> np.ndarray:
        return embed(content, self)


def embed(content: Content, e: Embedder) -> np.ndarray:
    """Hash each token into ``e.dim`` signed buckets, sum and L2-normalise."""
    toks = as_tokens(content)
    if not toks:
        raise EmptyContent("cannot embed empty content")
    vec = np.zeros(e.dim)
    for tok in toks:
        idx, sign = _bucket(tok, e.seed, e.dim)
        vec[idx] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # every bucket cancelled out
        vec[_bucket(toks[0], e.seed, e.dim)[0]] = 1.0
        return vec
    return vec / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b))


class HasEmbedding(Protocol):
    id: str
    embedding: np.ndarray


def top_k(query: np.ndarray, candidates: Iterable[HasEmbedding], k: int) -> list[tuple[str, float]]:
    """Return up to ``k`` (id, cosine) pairs, cosine descending then id ascending."""
    if k < 0:
        raise ValueError("k must be >= 0")
    cands: Sequence[HasEmbedding] = list(candidates)
    if k == 0 or not cands:
        return []
    mat = np.stack([c.embedding for c in cands])
    sims = mat @ query
    order = sorted(range(len(cands)), key=lambda i: (-sims[i], cands[i].id))
    return [(cands[i].id, float(sims[i])) for i in order[:k]]
