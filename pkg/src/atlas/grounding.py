"""Visual footprints for graph entities.

Dynamic entities ground through confidence-filtered open-vocabulary
detections linked into short greedy-IoU tracks; static infrastructure grounds
through precomputed layout masks, restricted to classes present in the
answer's graph. The layout reference frame is the uniformly-sampled frame
with the fewest detections, i.e. the least occluded view.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import BadRequestError
from .knowledge_graph import EntityNode, KnowledgeGraph
from .taxonomy import Taxonomy, normalize_token, resolve_class
from .textutil import stem_tokens

CONFIDENCE_THRESHOLD = 0.65  # inclusive
IOU_THRESHOLD = 0.3

BBox = tuple[float, float, float, float]  # (cx, cy, w, h), normalized


@dataclass(frozen=True)
class Detection:
    frame_index: int
    class_prompt: str
    bbox: BBox
    confidence: float
    video_id: str = ""

    def __post_init__(self):
        cx, cy, w, h = self.bbox
        if not (0.0 <= self.confidence <= 1.0):
            raise BadRequestError(f"confidence {self.confidence} outside [0, 1]")
        if w < 0 or h < 0 or not all(0.0 <= v <= 1.0 for v in (cx, cy, w, h)):
            raise BadRequestError(f"bbox {self.bbox} outside the unit square")


@dataclass(frozen=True)
class Track:
    track_id: str
    samples: tuple[tuple[int, BBox, float], ...]
    node_id: str | None = None

    def __post_init__(self):
        frames = [s[0] for s in self.samples]
        if any(frames[i] >= frames[i + 1] for i in range(len(frames) - 1)):
            raise BadRequestError(f"track {self.track_id}: frame indices must increase")

    @property
    def first_frame(self) -> int:
        return self.samples[0][0]

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class LayoutMask:
    class_id: str
    geometry: tuple[tuple[tuple[float, float], ...], ...]  # list of polygons
    reference_frame: int


@dataclass(frozen=True)
class FrameSample:
    frame_index: int
    detection_count: int

    def __post_init__(self):
        if self.detection_count < 0:
            raise BadRequestError("detection count must be non-negative")


def filter_detections(
    dets: list[Detection], threshold: float = CONFIDENCE_THRESHOLD
) -> list[Detection]:
    """Keep detections with confidence >= threshold, order preserved."""
    if not (0.0 <= threshold <= 1.0):
        raise BadRequestError("threshold must lie in [0, 1]")
    return [d for d in dets if d.confidence >= threshold]


def select_reference_frame(samples: list[FrameSample]) -> int:
    """Frame with the fewest detections; ties go to the earliest frame."""
    if not samples:
        raise BadRequestError("cannot select a reference frame from no samples")
    best = min(samples, key=lambda s: (s.detection_count, s.frame_index))
    return best.frame_index


def uniform_frame_indices(total_frames: int, n: int) -> list[int]:
    """n frame indices spread uniformly across [0, total_frames)."""
    if total_frames <= 0 or n <= 0:
        raise BadRequestError("need positive frame count and sample count")
    if n >= total_frames:
        return list(range(total_frames))
    step = total_frames / n
    return sorted({int(i * step) for i in range(n)})


def iou(a: BBox, b: BBox) -> float:
    ax1, ay1 = a[0] - a[2] / 2, a[1] - a[3] / 2
    ax2, ay2 = a[0] + a[2] / 2, a[1] + a[3] / 2
    bx1, by1 = b[0] - b[2] / 2, b[1] - b[3] / 2
    bx2, by2 = b[0] + b[2] / 2, b[1] + b[3] / 2
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def link_tracks(
    dets_by_frame: dict[int, list[Detection]],
    iou_threshold: float = IOU_THRESHOLD,
) -> list[Track]:
    """Greedy frame-to-frame association over consecutive sampled frames.

    Within each frame pair, candidate matches are taken in descending IoU and
    accepted when IoU >= threshold with each detection used at most once.
    Unmatched detections start new tracks; there is no re-identification
    after a gap.
    """
    frames = sorted(dets_by_frame)
    tracks: list[list[tuple[int, BBox, float]]] = []
    prev: list[int] = []  # track index per detection of the previous frame
    for pos, frame in enumerate(frames):
        dets = dets_by_frame[frame]
        assignment: dict[int, int] = {}
        if pos > 0 and prev and dets:
            pairs = []
            for t_slot, track_idx in enumerate(prev):
                tail_bbox = tracks[track_idx][-1][1]
                for d_idx, det in enumerate(dets):
                    score = iou(tail_bbox, det.bbox)
                    if score >= iou_threshold:
                        pairs.append((score, t_slot, d_idx))
            pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
            used_tracks: set[int] = set()
            for score, t_slot, d_idx in pairs:
                if t_slot in used_tracks or d_idx in assignment:
                    continue
                used_tracks.add(t_slot)
                assignment[d_idx] = prev[t_slot]
        nxt: list[int] = []
        for d_idx, det in enumerate(dets):
            if d_idx in assignment:
                track_idx = assignment[d_idx]
            else:
                track_idx = len(tracks)
                tracks.append([])
            tracks[track_idx].append((det.frame_index, det.bbox, det.confidence))
            nxt.append(track_idx)
        prev = nxt
    return [
        Track(track_id=f"t-{idx:03d}", samples=tuple(samples))
        for idx, samples in enumerate(tracks)
    ]


def _prompt_matches_label(prompt: str, label: str) -> bool:
    p = set(stem_tokens(prompt))
    l = set(stem_tokens(label))
    if not p or not l:
        return False
    return p <= l or l <= p


def ground_dynamic(
    node: EntityNode,
    dets_by_frame: dict[int, list[Detection]],
    taxonomy: Taxonomy,
    confidence_threshold: float = CONFIDENCE_THRESHOLD,
    iou_threshold: float = IOU_THRESHOLD,
) -> Track | None:
    """Attach the longest matching track to a dynamic entity, or None when
    no detection matches (the node then stays ungrounded)."""
    cls = resolve_class(taxonomy, node.class_id)
    if cls.groundable_as != "dynamic":
        raise BadRequestError(
            f"node {node.node_id} ({node.class_id}) is not dynamic-groundable"
        )
    matching: dict[int, list[Detection]] = {}
    for frame in sorted(dets_by_frame):
        kept = [
            d
            for d in filter_detections(dets_by_frame[frame], confidence_threshold)
            if _prompt_matches_label(d.class_prompt, node.canonical_label)
        ]
        if kept:
            matching[frame] = kept
    if not matching:
        return None
    tracks = link_tracks(matching, iou_threshold)
    best = min(tracks, key=lambda t: (-len(t), t.first_frame, t.track_id))
    return replace(best, node_id=node.node_id)


def active_masks(masks: list[LayoutMask], graph: KnowledgeGraph) -> list[LayoutMask]:
    """Masks whose class appears among the graph's node classes, in order."""
    classes = graph.node_class_ids()
    return [m for m in masks if normalize_token(m.class_id) in classes]
