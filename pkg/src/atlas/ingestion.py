"""Corpus loading and persistence.

Captions, detections and video registrations are line-delimited JSON with a
one-line schema header (stream- and append-friendly); masks are one JSON
document per video. The whole store round-trips through a checksummed,
versioned snapshot blob - no partial restores.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BadRequestError, ConflictError, NotFoundError
from .gateway import ModelGateway
from .grounding import Detection, LayoutMask
from .segmentation import (
    ClipWindow,
    SegmentationParams,
    VideoMeta,
    clip_start,
    seconds_float,
    segment,
    to_seconds,
)
from .taxonomy import Taxonomy, resolve_class
from .vector_index import ClipDescriptor, EmbeddingVector, VectorIndex
from .vector_index import normalize as normalize_vector

SNAPSHOT_FORMAT = "atlas-snapshot"
SNAPSHOT_VERSION = 1

_SCHEMAS = {"videos": 1, "captions": 1, "detections": 1, "embeddings": 1, "masks": 1}


def _read_records(path: str | Path, kind: str):
    """Yield (line_number, record) after validating the header line."""
    p = Path(path)
    if not p.exists():
        raise NotFoundError(f"artifact file not found: {p}")
    with p.open("r", encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise BadRequestError(f"{p}:1: malformed header: {exc}") from exc
        if header.get("schema") != kind:
            raise BadRequestError(
                f"{p}:1: expected schema {kind!r}, got {header.get('schema')!r}"
            )
        if header.get("version", 0) > _SCHEMAS[kind]:
            raise ConflictError(
                f"{p}:1: schema version {header.get('version')} is newer than supported"
            )
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise BadRequestError(f"{p}:{lineno}: malformed record: {exc}") from exc


def _require(record: dict, keys: list[str], path, lineno: int) -> None:
    missing = [k for k in keys if k not in record]
    if missing:
        raise BadRequestError(f"{path}:{lineno}: record missing fields {missing}")


@dataclass
class PreprocessReport:
    indexed: int = 0
    failures: list[tuple[int, str]] = field(default_factory=list)


class CorpusStore:
    """All corpus artifacts for one deployment. One writer at a time; readers
    see pre- or post-ingest states, never intermediates."""

    def __init__(
        self,
        taxonomy: Taxonomy,
        params: SegmentationParams | None = None,
        dimension: int | None = None,
    ):
        self.taxonomy = taxonomy
        self.params = params or SegmentationParams()
        self.index = VectorIndex(dimension=dimension)
        self.videos: dict[str, VideoMeta] = {}
        self.detections: dict[str, list[Detection]] = {}
        self.masks: dict[str, list[LayoutMask]] = {}
        self._lock = threading.RLock()

    # -- registration

    def register_video(self, video: VideoMeta) -> None:
        with self._lock:
            self.videos[video.video_id] = video

    def video(self, video_id: str) -> VideoMeta:
        meta = self.videos.get(video_id)
        if meta is None:
            raise NotFoundError(f"unknown video: {video_id!r}")
        return meta

    def ingest_videos(self, path: str | Path) -> int:
        count = 0
        with self._lock:
            for lineno, record in _read_records(path, "videos"):
                _require(record, ["video_id", "duration_s", "fps"], path, lineno)
                try:
                    meta = VideoMeta(
                        video_id=record["video_id"],
                        duration_s=to_seconds(record["duration_s"]),
                        fps=float(record["fps"]),
                        source_uri=record.get("source_uri", ""),
                    )
                except BadRequestError as exc:
                    raise BadRequestError(f"{path}:{lineno}: {exc.message}") from exc
                self.register_video(meta)
                count += 1
        return count

    # -- captions

    def _validate_window(self, record: dict, path, lineno: int) -> tuple:
        video = self.videos.get(record["video_id"])
        if video is None:
            raise BadRequestError(f"{path}:{lineno}: unknown video_id {record['video_id']!r}")
        index = int(record["clip_index"])
        if index < 1:
            raise BadRequestError(f"{path}:{lineno}: clip_index is 1-based")
        start = to_seconds(record["start_s"])
        end = to_seconds(record["end_s"])
        if not start < end:
            raise BadRequestError(f"{path}:{lineno}: start_s must precede end_s")
        offset = to_seconds(record.get("offset_s", 0))
        expected = clip_start(index, self.params) + offset
        if start != expected:
            raise BadRequestError(
                f"{path}:{lineno}: start_s {seconds_float(start)} disagrees with the "
                f"segmentation formula (expected {seconds_float(expected)})"
            )
        if end > video.duration_s:
            raise BadRequestError(f"{path}:{lineno}: end_s exceeds video duration")
        if end - start > self.params.clip_len_s:
            raise BadRequestError(f"{path}:{lineno}: window longer than the clip length")
        return video, index, start, end

    def ingest_captions(
        self,
        path: str | Path,
        gateway: ModelGateway | None = None,
        embeddings_path: str | Path | None = None,
    ) -> int:
        """One descriptor per record; duplicates replace. Embeddings are
        recomputed through the configured embedder unless a co-supplied
        embeddings file provides them."""
        supplied: dict[tuple[str, int], EmbeddingVector] = {}
        if embeddings_path is not None:
            for lineno, record in _read_records(embeddings_path, "embeddings"):
                _require(record, ["video_id", "clip_index", "values"], embeddings_path, lineno)
                supplied[(record["video_id"], int(record["clip_index"]))] = normalize_vector(
                    record["values"]
                )
        count = 0
        with self._lock:
            for lineno, record in _read_records(path, "captions"):
                _require(
                    record,
                    ["video_id", "clip_index", "start_s", "end_s", "description"],
                    path,
                    lineno,
                )
                _, index, start, end = self._validate_window(record, path, lineno)
                descriptor = ClipDescriptor(
                    video_id=record["video_id"],
                    clip_index=index,
                    start_s=start,
                    end_s=end,
                    description=record["description"],
                    extra=record.get("extra", {}),
                )
                key = (descriptor.video_id, descriptor.clip_index)
                if key in supplied:
                    embedding = supplied[key]
                elif gateway is not None:
                    embedding = gateway.embed_text(descriptor.description)
                else:
                    raise BadRequestError(
                        f"{path}:{lineno}: no embedder configured and no embedding supplied"
                    )
                self.index.upsert(descriptor, embedding)
                count += 1
        return count

    # -- preprocessing

    def run_preprocessing(
        self,
        video: VideoMeta,
        gateway: ModelGateway,
        params: SegmentationParams | None = None,
    ) -> PreprocessReport:
        """Segment, caption, embed and index one video. Per-clip failures are
        collected; completed clips persist."""
        params = params or self.params
        report = PreprocessReport()
        with self._lock:
            self.register_video(video)
            for window in segment(video, params):
                try:
                    description = gateway.caption_clip(window)
                    embedding = gateway.embed_text(description)
                except Exception as exc:  # collected, not fatal for the batch
                    message = getattr(exc, "message", None) or str(exc)
                    report.failures.append((window.index, message))
                    continue
                descriptor = ClipDescriptor(
                    video_id=video.video_id,
                    clip_index=window.index,
                    start_s=window.start_s,
                    end_s=window.end_s,
                    description=description,
                )
                self.index.upsert(descriptor, embedding)
                report.indexed += 1
        return report

    # -- detections and masks

    def ingest_detections(self, path: str | Path) -> int:
        count = 0
        with self._lock:
            staged: dict[str, list[Detection]] = {}
            for lineno, record in _read_records(path, "detections"):
                _require(
                    record,
                    ["video_id", "frame_index", "class_prompt", "cx", "cy", "w", "h", "confidence"],
                    path,
                    lineno,
                )
                if record["video_id"] not in self.videos:
                    raise BadRequestError(
                        f"{path}:{lineno}: unknown video_id {record['video_id']!r}"
                    )
                try:
                    det = Detection(
                        frame_index=int(record["frame_index"]),
                        class_prompt=str(record["class_prompt"]),
                        bbox=(
                            float(record["cx"]),
                            float(record["cy"]),
                            float(record["w"]),
                            float(record["h"]),
                        ),
                        confidence=float(record["confidence"]),
                        video_id=record["video_id"],
                    )
                except BadRequestError as exc:
                    raise BadRequestError(f"{path}:{lineno}: {exc.message}") from exc
                staged.setdefault(det.video_id, []).append(det)
                count += 1
            for video_id, dets in staged.items():
                self.detections[video_id] = dets  # whole-file replace per video
        return count

    def ingest_masks(self, path: str | Path) -> int:
        """Per-video mask document. Classes that are not static taxonomy
        classes are rejected record-by-record; malformed geometry is an error."""
        p = Path(path)
        if not p.exists():
            raise NotFoundError(f"artifact file not found: {p}")
        try:
            doc = json.loads(p.read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise BadRequestError(f"{p}: malformed mask document: {exc}") from exc
        if doc.get("schema") != "masks":
            raise BadRequestError(f"{p}: expected schema 'masks'")
        if doc.get("version", 0) > _SCHEMAS["masks"]:
            raise ConflictError(f"{p}: schema version newer than supported")
        video_id = doc.get("video_id")
        if video_id not in self.videos:
            raise BadRequestError(f"{p}: unknown video_id {video_id!r}")
        accepted: list[LayoutMask] = []
        for entry in doc.get("masks", []):
            class_id = entry.get("class_id", "")
            try:
                cls = resolve_class(self.taxonomy, class_id)
            except NotFoundError:
                continue  # rejected: unknown class
            if cls.groundable_as != "static":
                continue  # rejected: not a static infrastructure class
            polygons = entry.get("polygons")
            if polygons is None and "polygon" in entry:
                polygons = [entry["polygon"]]
            if not polygons:
                raise BadRequestError(f"{p}: mask {class_id!r} has no geometry")
            parsed = []
            for poly in polygons:
                if len(poly) < 3:
                    raise BadRequestError(
                        f"{p}: mask {class_id!r} polygon needs >= 3 vertices"
                    )
                try:
                    parsed.append(tuple((float(x), float(y)) for x, y in poly))
                except (TypeError, ValueError) as exc:
                    raise BadRequestError(
                        f"{p}: mask {class_id!r} has malformed geometry"
                    ) from exc
            accepted.append(
                LayoutMask(
                    class_id=cls.id,
                    geometry=tuple(parsed),
                    reference_frame=int(entry.get("reference_frame", 0)),
                )
            )
        with self._lock:
            self.masks[video_id] = accepted
        return len(accepted)

    # -- snapshot / restore

    def snapshot(self) -> bytes:
        with self._lock:
            payload = {
                "params": {
                    "clip_len_s": seconds_float(self.params.clip_len_s),
                    "overlap_s": seconds_float(self.params.overlap_s),
                },
                "videos": [
                    {
                        "video_id": v.video_id,
                        "duration_s": seconds_float(v.duration_s),
                        "fps": v.fps,
                        "source_uri": v.source_uri,
                    }
                    for v in sorted(self.videos.values(), key=lambda v: v.video_id)
                ],
                "clips": [
                    {
                        "video_id": d.video_id,
                        "clip_index": d.clip_index,
                        "start_s": seconds_float(d.start_s),
                        "end_s": seconds_float(d.end_s),
                        "description": d.description,
                        "extra": d.extra,
                        "embedding": list(e.values),
                    }
                    for d, e in sorted(self.index.entries(), key=lambda de: de[0].key)
                ],
                "detections": {
                    video_id: [
                        {
                            "frame_index": det.frame_index,
                            "class_prompt": det.class_prompt,
                            "bbox": list(det.bbox),
                            "confidence": det.confidence,
                        }
                        for det in dets
                    ]
                    for video_id, dets in sorted(self.detections.items())
                },
                "masks": {
                    video_id: [
                        {
                            "class_id": m.class_id,
                            "polygons": [[list(v) for v in poly] for poly in m.geometry],
                            "reference_frame": m.reference_frame,
                        }
                        for m in masks
                    ]
                    for video_id, masks in sorted(self.masks.items())
                },
            }
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        header = json.dumps(
            {
                "format": SNAPSHOT_FORMAT,
                "version": SNAPSHOT_VERSION,
                "sha256": hashlib.sha256(body).hexdigest(),
                "length": len(body),
            },
            sort_keys=True,
        ).encode("utf-8")
        return header + b"\n" + body

    @classmethod
    def restore(cls, blob: bytes, taxonomy: Taxonomy) -> "CorpusStore":
        newline = blob.find(b"\n")
        if newline < 0:
            raise BadRequestError("snapshot blob has no header")
        try:
            header = json.loads(blob[:newline])
        except json.JSONDecodeError as exc:
            raise BadRequestError(f"snapshot header unreadable: {exc}") from exc
        if header.get("format") != SNAPSHOT_FORMAT:
            raise BadRequestError("not an atlas snapshot blob")
        if header.get("version", 0) > SNAPSHOT_VERSION:
            raise ConflictError(
                f"snapshot version {header.get('version')} is newer than supported "
                f"({SNAPSHOT_VERSION}); refusing partial load"
            )
        body = blob[newline + 1 :]
        if len(body) != header.get("length") or hashlib.sha256(body).hexdigest() != header.get(
            "sha256"
        ):
            raise BadRequestError("snapshot checksum mismatch: blob corrupt or truncated")
        payload = json.loads(body)

        params = SegmentationParams(
            clip_len_s=to_seconds(payload["params"]["clip_len_s"]),
            overlap_s=to_seconds(payload["params"]["overlap_s"]),
        )
        store = cls(taxonomy=taxonomy, params=params)
        for v in payload["videos"]:
            store.register_video(
                VideoMeta(
                    video_id=v["video_id"],
                    duration_s=to_seconds(v["duration_s"]),
                    fps=v["fps"],
                    source_uri=v.get("source_uri", ""),
                )
            )
        for c in payload["clips"]:
            descriptor = ClipDescriptor(
                video_id=c["video_id"],
                clip_index=c["clip_index"],
                start_s=to_seconds(c["start_s"]),
                end_s=to_seconds(c["end_s"]),
                description=c["description"],
                extra=c.get("extra", {}),
            )
            store.index.upsert(descriptor, EmbeddingVector(values=tuple(c["embedding"])))
        for video_id, dets in payload["detections"].items():
            store.detections[video_id] = [
                Detection(
                    frame_index=d["frame_index"],
                    class_prompt=d["class_prompt"],
                    bbox=tuple(d["bbox"]),
                    confidence=d["confidence"],
                    video_id=video_id,
                )
                for d in dets
            ]
        for video_id, masks in payload["masks"].items():
            store.masks[video_id] = [
                LayoutMask(
                    class_id=m["class_id"],
                    geometry=tuple(tuple(tuple(v) for v in poly) for poly in m["polygons"]),
                    reference_frame=m["reference_frame"],
                )
                for m in masks
            ]
        return store

    # -- convenience views

    def clip_window(self, video_id: str, clip_index: int) -> ClipWindow:
        descriptor = self.index.get(video_id, clip_index)
        return ClipWindow(
            video_id=video_id,
            index=clip_index,
            start_s=descriptor.start_s,
            length_s=descriptor.end_s - descriptor.start_s,
        )

    def detections_for_window(
        self, video_id: str, start_s, end_s
    ) -> dict[int, list[Detection]]:
        """Per-frame detections restricted to [start_s, end_s) of one video."""
        video = self.video(video_id)
        first = int(seconds_float(to_seconds(start_s)) * video.fps)
        last = int(seconds_float(to_seconds(end_s)) * video.fps)
        out: dict[int, list[Detection]] = {}
        for det in self.detections.get(video_id, []):
            if first <= det.frame_index < last:
                out.setdefault(det.frame_index, []).append(det)
        return out
