"""Exact cosine top-k search over clip descriptors.

The corpus for a single deployment is a few thousand clips, so search is a
full scan over unit-normalized vectors: cosine reduces to a dot product and
ranking is exact, with a deterministic (video_id, clip_index) tie rule.
Readers always see a consistent snapshot; writes replace whole entries.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import BadRequestError, NotFoundError

UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    @property
    def d(self) -> int:
        return len(self.values)


def normalize(values) -> EmbeddingVector:
    """L2-normalize a raw sequence into an EmbeddingVector."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise BadRequestError("embedding must be a non-empty 1-d sequence")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise BadRequestError("cannot normalize a zero vector")
    return EmbeddingVector(values=tuple((arr / norm).tolist()))


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.d != b.d:
        raise BadRequestError(f"dimension mismatch: {a.d} vs {b.d}")
    va = np.asarray(a.values)
    vb = np.asarray(b.values)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise BadRequestError("cosine undefined for zero vectors")
    return float(np.dot(va / na, vb / nb))


@dataclass(frozen=True)
class ClipDescriptor:
    video_id: str
    clip_index: int
    start_s: Fraction
    end_s: Fraction
    description: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise BadRequestError(
                f"clip {self.video_id}:{self.clip_index}: start must precede end"
            )

    @property
    def key(self) -> tuple[str, int]:
        return (self.video_id, self.clip_index)


@dataclass(frozen=True)
class RankedHit:
    descriptor: ClipDescriptor
    score: float
    rank: int


class VectorIndex:
    """In-memory exact-search index. Thread-safe: queries snapshot the entry
    table under the lock, then rank outside it."""

    def __init__(self, dimension: int | None = None):
        self._lock = threading.RLock()
        self._dimension = dimension
        self._entries: dict[tuple[str, int], tuple[ClipDescriptor, np.ndarray]] = {}
        self.query_count = 0
        self.upsert_count = 0

    @property
    def dimension(self) -> int | None:
        return self._dimension

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def upsert(self, descriptor: ClipDescriptor, embedding: EmbeddingVector) -> None:
        vec = np.asarray(embedding.values, dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise BadRequestError("cannot index a zero vector")
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            vec = vec / norm
        with self._lock:
            if self._dimension is None:
                self._dimension = vec.size
            elif vec.size != self._dimension:
                raise BadRequestError(
                    f"dimension mismatch: index is d={self._dimension}, got d={vec.size}"
                )
            self._entries[descriptor.key] = (descriptor, vec)
            self.upsert_count += 1

    def get(self, video_id: str, clip_index: int) -> ClipDescriptor:
        with self._lock:
            entry = self._entries.get((video_id, clip_index))
        if entry is None:
            raise NotFoundError(f"no indexed clip {video_id}:{clip_index}")
        return entry[0]

    def remove(self, video_id: str, clip_index: int) -> None:
        with self._lock:
            self._entries.pop((video_id, clip_index), None)

    def entries(self) -> list[tuple[ClipDescriptor, EmbeddingVector]]:
        with self._lock:
            snapshot = list(self._entries.values())
        return [(d, EmbeddingVector(values=tuple(v.tolist()))) for d, v in snapshot]

    def top_k(
        self,
        query: EmbeddingVector,
        k: int,
        video_filter: str | None = None,
    ) -> list[RankedHit]:
        if k < 1:
            raise BadRequestError("k must be >= 1")
        q = np.asarray(query.values, dtype=np.float64)
        qnorm = float(np.linalg.norm(q))
        if qnorm == 0.0:
            raise BadRequestError("query vector must be nonzero")
        q = q / qnorm
        with self._lock:
            self.query_count += 1
            if self._dimension is not None and q.size != self._dimension:
                raise BadRequestError(
                    f"dimension mismatch: index is d={self._dimension}, got d={q.size}"
                )
            snapshot = list(self._entries.values())
        eligible = [
            (desc, vec)
            for desc, vec in snapshot
            if video_filter is None or desc.video_id == video_filter
        ]
        if not eligible:
            return []
        scored = [(float(np.dot(vec, q)), desc) for desc, vec in eligible]
        scored.sort(key=lambda item: (-item[0], item[1].video_id, item[1].clip_index))
        return [
            RankedHit(descriptor=desc, score=score, rank=rank)
            for rank, (score, desc) in enumerate(scored[:k], start=1)
        ]
