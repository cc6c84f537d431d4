"""Answer-level knowledge graph: canonicalized entity nodes, taxonomy-valid
relation edges, neighborhood queries and answer-span annotations.

Mentions merge into one node when they are class-compatible and either their
token Jaccard clears the lexical threshold or a supplied coreference score
clears the coreference threshold; merging is transitive. Edges are directed
triples over the merged nodes, restricted to the taxonomy's relation labels.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

from .errors import BadRequestError, NotFoundError
from .taxonomy import Taxonomy, category_color, normalize_token, resolve_class
from .textutil import token_jaccard

DEFAULT_LEXICAL_THRESHOLD = 0.5
DEFAULT_COREF_THRESHOLD = 0.7

Span = tuple[int, int]


@dataclass(frozen=True)
class EntityMention:
    surface: str
    class_id: str
    span: Span
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        start, end = self.span
        if not (0 <= start < end):
            raise BadRequestError(f"mention {self.surface!r}: empty or negative span")


@dataclass(frozen=True)
class EntityNode:
    node_id: str
    class_id: str
    canonical_label: str
    merged_spans: tuple[Span, ...]
    attributes: dict = field(default_factory=dict)
    attribute_conflicts: tuple[tuple[str, str], ...] = ()
    grounding: str = "ungrounded"  # ungrounded | dynamic | static
    grounding_ref: str | None = None


@dataclass(frozen=True)
class RelationEdge:
    subject: str
    label: str
    object: str


@dataclass(frozen=True)
class KnowledgeGraph:
    nodes: tuple[EntityNode, ...]
    edges: tuple[RelationEdge, ...]
    dropped_mentions: int = 0
    dropped_edges: int = 0

    def node(self, node_id: str) -> EntityNode:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise NotFoundError(f"unknown graph node: {node_id!r}")

    def has_node(self, node_id: str) -> bool:
        return any(n.node_id == node_id for n in self.nodes)

    def node_class_ids(self) -> set[str]:
        return {normalize_token(n.class_id) for n in self.nodes}

    def apply_grounding(self, grounding: dict[str, tuple[str, str]]) -> "KnowledgeGraph":
        """Return a copy with ``grounding[node_id] = (kind, ref)`` applied."""
        nodes = tuple(
            replace(n, grounding=grounding[n.node_id][0], grounding_ref=grounding[n.node_id][1])
            if n.node_id in grounding
            else n
            for n in self.nodes
        )
        return replace(self, nodes=nodes)


def _node_id(class_id: str, canonical_label: str, answer_id: str) -> str:
    digest = hashlib.sha256(
        f"{class_id}\x1f{canonical_label}\x1f{answer_id}".encode("utf-8")
    ).hexdigest()
    return f"n-{digest[:12]}"


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _class_compatible(a: EntityMention, b: EntityMention) -> bool:
    ca, cb = normalize_token(a.class_id), normalize_token(b.class_id)
    if ca != cb:
        return False
    # Distinct-actor guard: pedestrians and drivers never collapse even if a
    # caller relaxes class ids upstream.
    if {ca, cb} == {"pedestrian", "driver"}:
        return False
    return True


def canonicalize(
    mentions: list[EntityMention],
    coref_scores: dict[tuple[int, int], float] | None = None,
    lexical_threshold: float = DEFAULT_LEXICAL_THRESHOLD,
    coref_threshold: float = DEFAULT_COREF_THRESHOLD,
    answer_id: str = "",
) -> list[EntityNode]:
    """Merge mentions of the same real-world entity into deduplicated nodes.

    ``coref_scores`` maps unordered mention-index pairs to scores in [0, 1];
    missing pairs default to 0 so lexical overlap alone can merge.
    """
    nodes, _ = canonicalize_with_map(
        mentions, coref_scores, lexical_threshold, coref_threshold, answer_id
    )
    return nodes


def canonicalize_with_map(
    mentions: list[EntityMention],
    coref_scores: dict[tuple[int, int], float] | None = None,
    lexical_threshold: float = DEFAULT_LEXICAL_THRESHOLD,
    coref_threshold: float = DEFAULT_COREF_THRESHOLD,
    answer_id: str = "",
) -> tuple[list[EntityNode], list[str]]:
    """As canonicalize, but also return the node id each mention merged into
    (index-aligned with ``mentions``)."""
    coref_scores = coref_scores or {}

    def coref(i: int, j: int) -> float:
        return max(coref_scores.get((i, j), 0.0), coref_scores.get((j, i), 0.0))

    uf = _UnionFind(len(mentions))
    for i in range(len(mentions)):
        for j in range(i + 1, len(mentions)):
            if not _class_compatible(mentions[i], mentions[j]):
                continue
            lexical = token_jaccard(mentions[i].surface, mentions[j].surface)
            if lexical >= lexical_threshold or coref(i, j) >= coref_threshold:
                uf.union(i, j)

    groups: dict[int, list[int]] = {}
    for i in range(len(mentions)):
        groups.setdefault(uf.find(i), []).append(i)

    nodes = []
    node_of_mention = [""] * len(mentions)
    used_ids: set[str] = set()
    for root in sorted(groups):
        member_indices = sorted(groups[root], key=lambda i: mentions[i].span)
        members = [mentions[i] for i in member_indices]
        canonical = max(members, key=lambda m: (len(m.surface), -m.span[0]))
        attributes: dict = {}
        conflicts: list[tuple[str, str]] = []
        for m in members:
            for key, value in m.attributes.items():
                if key not in attributes:
                    attributes[key] = value
                elif attributes[key] != value:
                    conflicts.append((key, value))
        node_id = _node_id(canonical.class_id, canonical.surface, answer_id)
        salt = answer_id
        while node_id in used_ids:  # same class+label twice in one answer
            salt += "+"
            node_id = _node_id(canonical.class_id, canonical.surface, salt)
        used_ids.add(node_id)
        for i in member_indices:
            node_of_mention[i] = node_id
        nodes.append(
            EntityNode(
                node_id=node_id,
                class_id=canonical.class_id,
                canonical_label=canonical.surface,
                merged_spans=tuple(m.span for m in members),
                attributes=attributes,
                attribute_conflicts=tuple(conflicts),
            )
        )
    return nodes, node_of_mention


def build_graph(
    nodes: list[EntityNode],
    triples: list[tuple[str, str, str]],
    taxonomy: Taxonomy,
    dropped_mentions: int = 0,
) -> KnowledgeGraph:
    """Assemble a validated graph from nodes and (subject, label, object)
    triples referencing node ids. Off-taxonomy labels and self-relations are
    dropped and counted; a dangling endpoint is an error."""
    by_id = {n.node_id: n for n in nodes}
    for n in nodes:
        resolve_class(taxonomy, n.class_id)

    edges: list[RelationEdge] = []
    seen: set[tuple[str, str, str]] = set()
    dropped_edges = 0
    for subject, label, obj in triples:
        if subject not in by_id or obj not in by_id:
            raise NotFoundError(f"edge endpoint not in node set: ({subject}, {label}, {obj})")
        if not taxonomy.has_relation(label) or subject == obj:
            dropped_edges += 1
            continue
        key = (subject, label, obj)
        if key in seen:
            continue
        seen.add(key)
        edges.append(RelationEdge(subject=subject, label=label, object=obj))

    return KnowledgeGraph(
        nodes=tuple(nodes),
        edges=tuple(edges),
        dropped_mentions=dropped_mentions,
        dropped_edges=dropped_edges,
    )


def neighborhood(graph: KnowledgeGraph, node_id: str, radius: int = 1) -> KnowledgeGraph:
    """Induced subgraph of nodes within ``radius`` hops, following edges in
    either direction. Radius 1 is the tooltip view."""
    if radius < 0:
        raise BadRequestError("radius must be >= 0")
    if not graph.has_node(node_id):
        raise NotFoundError(f"unknown graph node: {node_id!r}")

    kept = {node_id}
    frontier = {node_id}
    for _ in range(radius):
        nxt = set()
        for edge in graph.edges:
            if edge.subject in frontier and edge.object not in kept:
                nxt.add(edge.object)
            if edge.object in frontier and edge.subject not in kept:
                nxt.add(edge.subject)
        if not nxt:
            break
        kept |= nxt
        frontier = nxt

    nodes = tuple(n for n in graph.nodes if n.node_id in kept)
    edges = tuple(e for e in graph.edges if e.subject in kept and e.object in kept)
    return KnowledgeGraph(nodes=nodes, edges=edges)


@dataclass(frozen=True)
class Annotation:
    start: int
    end: int
    node_id: str
    color: str


def annotate_answer(
    answer: str, graph: KnowledgeGraph, taxonomy: Taxonomy
) -> list[Annotation]:
    """One annotation per merged span, colored by taxonomy category.
    Overlaps resolve to the longer span, then the earlier start."""
    candidates = []
    for node in graph.nodes:
        color = category_color(taxonomy, node.class_id)
        for start, end in node.merged_spans:
            if not (0 <= start < end <= len(answer)):
                raise BadRequestError(
                    f"span ({start}, {end}) out of bounds for answer of length {len(answer)}"
                )
            candidates.append(Annotation(start=start, end=end, node_id=node.node_id, color=color))

    candidates.sort(key=lambda a: (-(a.end - a.start), a.start, a.node_id))
    accepted: list[Annotation] = []
    for cand in candidates:
        if all(cand.end <= kept.start or cand.start >= kept.end for kept in accepted):
            accepted.append(cand)
    accepted.sort(key=lambda a: a.start)
    return accepted


def graph_document(graph: KnowledgeGraph) -> dict:
    """Serialized graph as served by the API."""
    return {
        "nodes": [
            {
                "node_id": n.node_id,
                "class_id": n.class_id,
                "canonical_label": n.canonical_label,
                "spans": [list(span) for span in n.merged_spans],
                "attributes": dict(n.attributes),
                "attribute_conflicts": [list(c) for c in n.attribute_conflicts],
                "grounding": {"kind": n.grounding, "ref": n.grounding_ref},
            }
            for n in graph.nodes
        ],
        "edges": [
            {"subject": e.subject, "label": e.label, "object": e.object}
            for e in graph.edges
        ],
        "dropped_mentions": graph.dropped_mentions,
        "dropped_edges": graph.dropped_edges,
    }
