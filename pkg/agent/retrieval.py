# agent/retrieval.py
"""
Embedding-based tool retrieval with a hybrid cutoff.

Tools are ranked by cosine similarity to the query; the top-M scores are cut
at ``min(N_jump, N_kneedle)`` and lifted to a floor of ``min_retained``
(capped by the candidate count).
"""
from __future__ import annotations

import hashlib
import logging
import re
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np
import requests

from core.errors import (
    ConfigError,
    DimensionMismatchError,
    EmptyInputError,
    ProviderUnavailableError,
    TooFewScoresError,
    ZeroVectorError,
)
from tools.schema import ToolSchema

logger = logging.getLogger(__name__)

FLAT_CURVE_EPS = 1e-12


# ── Embeddings ───────────────────────────────────────────────────────────────

class EmbeddingVector:
    """Read-only fixed-length vector."""

    __slots__ = ("values",)

    def __init__(self, values: Iterable[float]):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("embedding must be a nonempty 1-d vector")
        arr.setflags(write=False)
        self.values = arr

    @property
    def dimension(self) -> int:
        return int(self.values.size)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def __eq__(self, other) -> bool:
        return isinstance(other, EmbeddingVector) and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"EmbeddingVector(dimension={self.dimension})"


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> EmbeddingVector: ...


_WORD = re.compile(r"\w+")
STOPWORDS = frozenset(
    "a an the of to in on for at by and or is are be with from me my i you your it this that "
    "please can could would will then".split()
)


def bag_of_tokens(text: str) -> list[str]:
    tokens = [t for t in _WORD.findall(text.lower()) if t not in STOPWORDS]
    if not tokens:
        stripped = text.strip().lower()
        tokens = [stripped] if stripped else []
    return tokens


class HashingEmbedder:
    """
    Deterministic offline embedder: each token is hashed to a bucket and the
    bucket counts are L2-normalized. Word order does not matter.
    """

    name = "hashing"

    def __init__(self, dimension: int = 1024):
        if dimension < 1:
            raise ConfigError("embedding.dimension must be positive")
        self.dimension = dimension

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dimension

    def embed(self, text: str) -> EmbeddingVector:
        tokens = bag_of_tokens(text)
        if not tokens:
            raise EmptyInputError("cannot embed empty text")
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in tokens:
            vec[self._bucket(token)] += 1.0
        return EmbeddingVector(vec / np.linalg.norm(vec))


class RemoteEmbedder:
    """Embedding endpoint speaking ``{"input": text}`` -> ``{"embedding": [...]}``."""

    name = "remote"

    def __init__(self, url: str, api_key: str | None = None, dimension: int | None = None, timeout: float = 30.0):
        self.url = url
        self.api_key = api_key
        self.dimension = dimension
        self.timeout = timeout

    def embed(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise EmptyInputError("cannot embed empty text")
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = requests.post(self.url, json={"input": text}, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            payload = resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise ProviderUnavailableError(f"embedding provider at {self.url} failed: {exc}") from exc
        values = payload.get("embedding") or payload["data"][0]["embedding"]
        vec = np.asarray(values, dtype=np.float64)
        if self.dimension is not None and vec.size != self.dimension:
            raise DimensionMismatchError(f"provider returned {vec.size} dims, expected {self.dimension}")
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ZeroVectorError("provider returned a zero vector")
        return EmbeddingVector(vec / norm)


def embed(text: str, embedder: Embedder) -> EmbeddingVector:
    return embedder.embed(text)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dimension != b.dimension:
        raise DimensionMismatchError(f"{a.dimension} != {b.dimension}")
    na, nb = a.norm, b.norm
    if na == 0 or nb == 0:
        raise ZeroVectorError("cosine similarity of a zero vector")
    value = float(np.dot(a.values, b.values) / (na * nb))
    return min(1.0, max(-1.0, value))


# ── Ranking and cutoffs ──────────────────────────────────────────────────────

@dataclass(frozen=True)
class RetrievalConfig:
    top_m: int = 50
    min_retained: int = 10
    jump_min_gap: float = 0.05

    def __post_init__(self):
        if self.top_m < 1 or self.min_retained < 1:
            raise ConfigError("retrieval.top_m and retrieval.min_retained must be positive")
        if self.min_retained > self.top_m:
            raise ConfigError("retrieval.min_retained must not exceed retrieval.top_m")
        if not 0 < self.jump_min_gap <= 1:
            raise ConfigError("retrieval.jump_min_gap must be in (0, 1]")


@dataclass(frozen=True)
class CutoffResult:
    n_jump: int
    n_kneedle: int
    n_final: int
    retained: tuple[tuple[str, float], ...]

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.retained]


def rank_top_m(
    query: EmbeddingVector,
    tools: Sequence[tuple[str, EmbeddingVector]],
    cfg: RetrievalConfig,
) -> list[tuple[str, float]]:
    """Highest similarity first; equal scores fall back to the tool name."""
    scored = [(name, cosine_similarity(query, vec)) for name, vec in tools]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[: cfg.top_m]


def detect_jump(scores: Sequence[float], jump_min_gap: float = 0.05) -> int:
    """Cut after the largest drop between neighbours; no qualifying drop keeps everything."""
    if len(scores) < 2:
        raise TooFewScoresError("similarity-jump needs at least 2 scores")
    gaps = -np.diff(np.asarray(scores, dtype=np.float64))
    i = int(np.argmax(gaps))  # first index on ties
    if gaps[i] < jump_min_gap:
        return len(scores)
    return i + 1


def detect_kneedle(scores: Sequence[float]) -> int:
    """
    Cut at the point where the normalized cumulative similarity curve sits
    furthest above the diagonal. Negative scores are clamped to zero first;
    a flat curve keeps everything.
    """
    n = len(scores)
    if n < 3:
        raise TooFewScoresError("kneedle needs at least 3 scores")
    clamped = np.clip(np.asarray(scores, dtype=np.float64), 0.0, None)
    cumulative = np.cumsum(clamped)
    if cumulative[-1] <= 0:
        return n
    y = cumulative / cumulative[-1]
    # x runs over 1/n .. 1 so that equal scores give exactly the diagonal
    x = np.arange(1, n + 1, dtype=np.float64) / n
    deviation = y - x
    i = int(np.argmax(deviation))
    if deviation[i] <= FLAT_CURVE_EPS:
        return n
    return i + 1


def cutoff(ranked: Sequence[tuple[str, float]], cfg: RetrievalConfig) -> CutoffResult:
    """Apply both detectors to an already ranked list and lift by the floor."""
    scores = [score for _, score in ranked]
    count = len(scores)
    n_jump = detect_jump(scores, cfg.jump_min_gap) if count >= 2 else count
    n_kneedle = detect_kneedle(scores) if count >= 3 else count
    floor = min(cfg.min_retained, count)
    n_final = max(min(n_jump, n_kneedle), floor)
    return CutoffResult(n_jump, n_kneedle, n_final, tuple(ranked[:n_final]))


class ToolIndex:
    """
    Embeddings of registry tools, computed from ``ToolSchema.embedding_text``.
    Building is exclusive; selection afterwards only reads the cache.
    """

    def __init__(self, embedder: Embedder, rewrite: Callable[[str], str] | None = None):
        self.embedder = embedder
        self.rewrite = rewrite
        self._vectors: dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()

    def build(self, tools: Iterable[ToolSchema]) -> "ToolIndex":
        with self._lock:
            for schema in tools:
                if schema.tool_name not in self._vectors:
                    self._vectors[schema.tool_name] = self.embedder.embed(schema.embedding_text())
        logger.debug("Tool index holds %d embeddings", len(self._vectors))
        return self

    def __len__(self) -> int:
        return len(self._vectors)

    def names(self) -> list[str]:
        return list(self._vectors)

    def vectors(self, names: Iterable[str]) -> list[tuple[str, EmbeddingVector]]:
        return [(name, self._vectors[name]) for name in names if name in self._vectors]

    def select(self, query: str, cfg: RetrievalConfig, names: Iterable[str] | None = None) -> CutoffResult:
        return select_tools(query, self, cfg, names)


def select_tools(
    query: str,
    index: ToolIndex,
    cfg: RetrievalConfig,
    names: Iterable[str] | None = None,
) -> CutoffResult:
    """Embed the query, rank the (optionally restricted) registry and cut the list."""
    candidates = index.vectors(names if names is not None else index.names())
    if not candidates:
        raise EmptyInputError("no candidate tools to select from")
    text = index.rewrite(query) if index.rewrite else query
    ranked = rank_top_m(index.embedder.embed(text), candidates, cfg)
    result = cutoff(ranked, cfg)
    logger.debug(
        "select_tools: jump=%d kneedle=%d final=%d of %d",
        result.n_jump, result.n_kneedle, result.n_final, len(candidates),
    )
    return result
