"""End-to-end answer pipeline and per-session conversation state.

Stage order is fixed: screen, enrich, embed+retrieve, narrate, extract,
canonicalize+graph, ground, assemble. A refusal short-circuits before any
index read. Under mock backends the whole pipeline is a pure function of
(corpus snapshot, session history, query), so answers replay byte-identically
modulo generated ids.
"""

from __future__ import annotations

import hashlib
import threading
import uuid
from dataclasses import dataclass, field
from dataclasses import replace as dataclasses_replace

from .config import AtlasConfig
from .errors import BadRequestError, ConflictError, NotFoundError, RefusedError
from .gateway import ModelGateway, clip_marker
from .grounding import LayoutMask, Track, active_masks, ground_dynamic
from .ingestion import CorpusStore
from .knowledge_graph import (
    Annotation,
    KnowledgeGraph,
    annotate_answer,
    build_graph,
    canonicalize_with_map,
    graph_document,
)
from .segmentation import seconds_float
from .taxonomy import category_color, resolve_class
from .vector_index import RankedHit

STAGES = ("screened", "enriched", "retrieved", "narrated", "extracted", "grounded", "done")


@dataclass(frozen=True)
class Turn:
    query: str
    answer_id: str
    narrative: str
    chosen: tuple[str, int]


@dataclass
class QuerySession:
    session_id: str
    turns: list[Turn] = field(default_factory=list)
    active_clip: tuple[str, int] | None = None
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)


@dataclass(frozen=True)
class AugmentedAnswer:
    answer_id: str
    session_id: str
    query: str
    narrative: str
    graph: KnowledgeGraph
    annotations: tuple[Annotation, ...]
    tracks: tuple[Track, ...]
    active_masks: tuple[LayoutMask, ...]
    related: tuple[RankedHit, ...]
    confidence_band: str
    chosen: tuple[str, int]


def confidence_band(score: float, high: float = 0.75, medium: float = 0.5) -> str:
    """UI-facing discretization of the rank-1 similarity score."""
    if not (-1.0 <= score <= 1.0):
        raise BadRequestError(f"similarity score {score} outside [-1, 1]")
    if score >= high:
        return "high"
    if score >= medium:
        return "medium"
    return "low"


def related_for_timeline(answer: AugmentedAnswer) -> list[tuple[str, int, float, float]]:
    """Timeline entries (video_id, clip_index, start_s, normalized score):
    min-max normalized over the related set, grouped by video, ordered by
    start time within each group."""
    if not answer.related:
        raise BadRequestError("answer has no related hits")
    scores = [h.score for h in answer.related]
    lo, hi = min(scores), max(scores)

    def norm(score: float) -> float:
        return 1.0 if hi == lo else (score - lo) / (hi - lo)

    entries = [
        (
            h.descriptor.video_id,
            h.descriptor.clip_index,
            seconds_float(h.descriptor.start_s),
            norm(h.score),
        )
        for h in answer.related
    ]
    entries.sort(key=lambda e: (e[0], e[2], e[1]))
    return entries


class Orchestrator:
    """Owns sessions, produced answers, and the pipeline run."""

    def __init__(self, store: CorpusStore, gateway: ModelGateway, config: AtlasConfig | None = None):
        self.store = store
        self.gateway = gateway
        self.config = config or AtlasConfig()
        self.sessions: dict[str, QuerySession] = {}
        self.answers: dict[str, AugmentedAnswer] = {}
        self._registry_lock = threading.Lock()

    # -- session registry

    def create_session(self) -> QuerySession:
        session = QuerySession(session_id=f"s-{uuid.uuid4().hex[:12]}")
        with self._registry_lock:
            self.sessions[session.session_id] = session
        return session

    def session(self, session_id: str) -> QuerySession:
        session = self.sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"unknown session: {session_id!r}")
        return session

    def answer(self, answer_id: str) -> AugmentedAnswer:
        answer = self.answers.get(answer_id)
        if answer is None:
            raise NotFoundError(f"unknown answer: {answer_id!r}")
        return answer

    # -- pipeline

    def answer_query(
        self, session: QuerySession, q: str, k: int | None = None, observer=None
    ) -> AugmentedAnswer:
        with session.lock:
            return self._run(session, q, k, observer, follow_up=False)

    def follow_up(
        self, session: QuerySession, q: str, k: int | None = None, observer=None
    ) -> AugmentedAnswer:
        with session.lock:
            if not session.turns:
                raise BadRequestError("follow_up requires at least one prior turn")
            return self._run(session, q, k, observer, follow_up=True)

    def _emit(self, observer, stage: str, detail: dict) -> None:
        if observer is not None:
            observer(stage, detail)

    def _conversation_context(self, session: QuerySession) -> str:
        window = session.turns[-self.config.context_window :]
        parts = []
        for turn in window:
            parts.append(f"Q: {turn.query}")
            parts.append(f"A: {turn.narrative} {clip_marker(*turn.chosen)}")
        return "\n".join(parts)

    def _run(
        self, session: QuerySession, q: str, k: int | None, observer, follow_up: bool
    ) -> AugmentedAnswer:
        verdict = self.gateway.screen_query(q)
        if not verdict.allowed:
            self._emit(observer, "screened", {"allowed": False, "reason": verdict.reason})
            self._emit(observer, "done", {"refused": True})
            raise RefusedError(verdict.reason, stage="screen")
        self._emit(observer, "screened", {"allowed": True})

        enriched = self.gateway.enrich_query(q)
        self._emit(observer, "enriched", {"query": enriched})

        if len(self.store.index) == 0:
            raise ConflictError("corpus is empty: ingest or preprocess before querying")
        query_vec = self.gateway.embed_text(enriched)
        hits = self.store.index.top_k(query_vec, k or self.config.top_k)
        self._emit(observer, "retrieved", {"hits": len(hits)})

        top = hits[0]
        conversation = self._conversation_context(session) if follow_up or session.turns else ""
        narrative = self.gateway.generate_narrative(q, top, conversation)
        self._emit(observer, "narrated", {"length": len(narrative)})

        extraction = self.gateway.extract(narrative, q)
        answer_id = "a-" + hashlib.sha256(
            f"{session.session_id}|{len(session.turns)}|{q}".encode("utf-8")
        ).hexdigest()[:16]
        nodes, node_of_mention = canonicalize_with_map(
            list(extraction.mentions),
            extraction.coref_scores,
            lexical_threshold=self.config.lexical_threshold,
            coref_threshold=self.config.coref_threshold,
            answer_id=answer_id,
        )
        triples = [
            (node_of_mention[s], label, node_of_mention[o])
            for s, label, o in extraction.triples
        ]
        graph = build_graph(nodes, triples, self.gateway.taxonomy, dropped_mentions=extraction.dropped)
        self._emit(
            observer, "extracted", {"mentions": len(extraction.mentions), "nodes": len(nodes)}
        )

        chosen = top.descriptor.key
        dets_by_frame = self.store.detections_for_window(
            top.descriptor.video_id, top.descriptor.start_s, top.descriptor.end_s
        )
        tracks: list[Track] = []
        grounding_map: dict[str, tuple[str, str]] = {}
        for node in graph.nodes:
            cls = resolve_class(self.gateway.taxonomy, node.class_id)
            if cls.groundable_as == "dynamic":
                track = ground_dynamic(
                    node,
                    dets_by_frame,
                    self.gateway.taxonomy,
                    confidence_threshold=self.config.confidence_threshold,
                    iou_threshold=self.config.iou_threshold,
                )
                if track is not None:
                    # per-answer track ids (ground_dynamic numbers per run)
                    track = dataclasses_replace(track, track_id=f"t-{len(tracks):03d}")
                    tracks.append(track)
                    grounding_map[node.node_id] = ("dynamic", track.track_id)
        masks = active_masks(self.store.masks.get(top.descriptor.video_id, []), graph)
        mask_classes = {m.class_id for m in masks}
        for node in graph.nodes:
            if node.node_id in grounding_map:
                continue
            cls = resolve_class(self.gateway.taxonomy, node.class_id)
            if cls.groundable_as == "static" and cls.id in mask_classes:
                grounding_map[node.node_id] = ("static", f"mask:{cls.id}")
        graph = graph.apply_grounding(grounding_map)
        self._emit(observer, "grounded", {"tracks": len(tracks), "masks": len(masks)})

        annotations = annotate_answer(narrative, graph, self.gateway.taxonomy)
        answer = AugmentedAnswer(
            answer_id=answer_id,
            session_id=session.session_id,
            query=q,
            narrative=narrative,
            graph=graph,
            annotations=tuple(annotations),
            tracks=tuple(tracks),
            active_masks=tuple(masks),
            related=tuple(hits),
            confidence_band=confidence_band(
                top.score, high=self.config.band_high, medium=self.config.band_medium
            ),
            chosen=chosen,
        )
        self.validate_answer(answer)

        with self._registry_lock:
            self.answers[answer.answer_id] = answer
        session.turns.append(
            Turn(query=q, answer_id=answer.answer_id, narrative=narrative, chosen=chosen)
        )
        if follow_up and self.config.retain_active_clip_on_overlap and session.active_clip:
            if not self._windows_overlap(session.active_clip, chosen):
                session.active_clip = chosen
        else:
            session.active_clip = chosen
        self._emit(observer, "done", {"answer_id": answer.answer_id})
        return answer

    def _windows_overlap(self, a: tuple[str, int], b: tuple[str, int]) -> bool:
        if a == b:
            return True
        if a[0] != b[0]:
            return False
        da = self.store.index.get(*a)
        db = self.store.index.get(*b)
        return da.start_s < db.end_s and db.start_s < da.end_s

    # -- consistency

    def validate_answer(self, answer: AugmentedAnswer) -> None:
        """Single internal-consistency gate run on every produced answer."""
        if not answer.related:
            raise ConflictError("answer must carry at least one related hit")
        if answer.chosen != answer.related[0].descriptor.key:
            raise ConflictError("chosen clip must equal the rank-1 hit")
        node_ids = {n.node_id for n in answer.graph.nodes}
        for track in answer.tracks:
            if track.node_id not in node_ids:
                raise ConflictError(f"track {track.track_id} references a missing node")
        last_end = 0
        for ann in answer.annotations:
            if not (0 <= ann.start < ann.end <= len(answer.narrative)):
                raise ConflictError("annotation span out of narrative bounds")
            if ann.start < last_end:
                raise ConflictError("annotation spans overlap")
            last_end = ann.end
        graph_classes = answer.graph.node_class_ids()
        for mask in answer.active_masks:
            if mask.class_id not in graph_classes:
                raise ConflictError(f"active mask {mask.class_id} has no graph entity")
        expected_band = confidence_band(
            answer.related[0].score, high=self.config.band_high, medium=self.config.band_medium
        )
        if answer.confidence_band != expected_band:
            raise ConflictError("confidence band disagrees with the rank-1 score")

    # -- documents

    def answer_document(self, answer: AugmentedAnswer) -> dict:
        taxonomy = self.gateway.taxonomy
        entries = related_for_timeline(answer)
        rows: dict[str, list[dict]] = {}
        norm_by_key = {(v, c): n for v, c, _, n in entries}
        for video_id, clip_index, start_s, normalized in entries:
            descriptor = self.store.index.get(video_id, clip_index)
            rows.setdefault(video_id, []).append(
                {
                    "clip_index": clip_index,
                    "start_s": start_s,
                    "end_s": seconds_float(descriptor.end_s),
                    "normalized_score": normalized,
                }
            )
        class_of_node = {n.node_id: n.class_id for n in answer.graph.nodes}
        return {
            "answer_id": answer.answer_id,
            "session_id": answer.session_id,
            "query": answer.query,
            "narrative": answer.narrative,
            "graph": graph_document(answer.graph),
            "annotations": [
                {
                    "start": a.start,
                    "end": a.end,
                    "node_id": a.node_id,
                    "color": a.color,
                    "class_id": class_of_node.get(a.node_id, ""),
                }
                for a in answer.annotations
            ],
            "tracks": [self.track_document(t, answer) for t in answer.tracks],
            "active_masks": [self.mask_document(m, answer) for m in answer.active_masks],
            "related": [
                {
                    "video_id": h.descriptor.video_id,
                    "clip_index": h.descriptor.clip_index,
                    "start_s": seconds_float(h.descriptor.start_s),
                    "end_s": seconds_float(h.descriptor.end_s),
                    "score": h.score,
                    "rank": h.rank,
                    "normalized_score": norm_by_key[h.descriptor.key],
                }
                for h in answer.related
            ],
            "timeline": [
                {"video_id": video_id, "cells": cells} for video_id, cells in rows.items()
            ],
            "confidence_band": answer.confidence_band,
            "chosen": {"video_id": answer.chosen[0], "clip_index": answer.chosen[1]},
            "legend": [
                {"category": cat.id, "color": cat.display_color}
                for cat in taxonomy.categories
            ],
        }

    def track_document(self, track: Track, answer: AugmentedAnswer) -> dict:
        node = answer.graph.node(track.node_id)
        return {
            "track_id": track.track_id,
            "node_id": track.node_id,
            "class_id": node.class_id,
            "color": category_color(self.gateway.taxonomy, node.class_id),
            "samples": [
                {"frame_index": f, "bbox": list(b), "confidence": c}
                for f, b, c in track.samples
            ],
        }

    def mask_document(self, mask: LayoutMask, answer: AugmentedAnswer) -> dict:
        node_id = next(
            (
                n.node_id
                for n in answer.graph.nodes
                if n.class_id == mask.class_id
            ),
            None,
        )
        return {
            "class_id": mask.class_id,
            "node_id": node_id,
            "color": category_color(self.gateway.taxonomy, mask.class_id),
            "polygons": [[list(v) for v in poly] for poly in mask.geometry],
            "reference_frame": mask.reference_frame,
        }
