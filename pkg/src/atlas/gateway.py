"""Uniform access to the five external model roles: clip captioner, text
embedder, query enricher, narrator, and entity extractor.

Two interchangeable backends per role: a deterministic mock (pure function of
its inputs, used by the test suite and offline runs) and a remote HTTP
provider with bounded retries. The anti-profiling query screen runs locally
before any remote call; remote refusals pass through as refusals as well.
"""

from __future__ import annotations

import hashlib
import random
import re
import time
from dataclasses import dataclass, field
from importlib import resources

import httpx

from .config import AtlasConfig, BackendConfig
from .errors import BackendError, BadRequestError, RefusedError
from .knowledge_graph import EntityMention
from .segmentation import ClipWindow, seconds_float
from .taxonomy import Taxonomy, resolve_class
from .textutil import stem_tokens
from .vector_index import ClipDescriptor, EmbeddingVector, RankedHit
from .vector_index import normalize as normalize_vector

PROMPT_FILES = {
    "captioner": "clip_describer.txt",
    "narrator": "clip_analyzer.txt",
    "extractor": "entity_extractor.txt",
    "enricher": "query_enrichment.txt",
}

REQUIRED_PLACEHOLDERS = {
    "captioner": frozenset(),
    "narrator": frozenset({"user_question", "context", "conversation_context"}),
    "extractor": frozenset({"question"}),
    "enricher": frozenset({"query", "context_type"}),
}

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    role: str
    body: str

    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.body))

    def render(self, **values: str) -> str:
        def sub(match: re.Match) -> str:
            name = match.group(1)
            return str(values[name]) if name in values else match.group(0)

        return _PLACEHOLDER_RE.sub(sub, self.body)


def load_default_prompts() -> dict[str, PromptTemplate]:
    prompts = {}
    for role, filename in PROMPT_FILES.items():
        body = resources.files("atlas.prompts").joinpath(filename).read_text("utf-8")
        prompts[role] = PromptTemplate(role=role, body=body)
    return prompts


# ---------------------------------------------------------------------------
# Query screening

@dataclass(frozen=True)
class ScreenVerdict:
    allowed: bool
    reason: str | None = None

    def __post_init__(self):
        if not self.allowed and not self.reason:
            raise BadRequestError("refused verdicts must carry a reason")


_DENYLIST: list[tuple[str, list[re.Pattern]]] = [
    (
        "race or ethnicity",
        [
            re.compile(r"\brace\b", re.I),
            re.compile(r"\bracial\b", re.I),
            re.compile(r"\bethnic(?:ity|ities)?\b", re.I),
            re.compile(r"\bskin\s+(?:color|colour|tone)\b", re.I),
        ],
    ),
    (
        "nationality",
        [
            re.compile(r"\bnationalit(?:y|ies)\b", re.I),
            re.compile(r"\bforeigners?\b", re.I),
            re.compile(r"\bwhat\s+country\b.*\bfrom\b", re.I),
        ],
    ),
    (
        "religion",
        [
            re.compile(r"\breligio(?:n|us)\b", re.I),
            re.compile(r"\b(?:muslim|christian|jewish|hindu|buddhist|sikh)s?\b", re.I),
        ],
    ),
    (
        "socioeconomic status",
        [
            re.compile(
                r"\b(?:poor|rich|wealthy)\b(?!\s+(?:visibility|lighting|weather|condition))",
                re.I,
            ),
            re.compile(r"\bhomeless\b", re.I),
            re.compile(r"\bsocioeconomic\b", re.I),
            re.compile(r"\bincome\b", re.I),
        ],
    ),
    (
        "political affiliation",
        [
            re.compile(r"\bpolitic(?:al|s)?\b", re.I),
            re.compile(r"\b(?:democrat|republican|liberal|conservative)s?\b", re.I),
        ],
    ),
    (
        "immigration status",
        [
            re.compile(r"\bimmigr\w*\b", re.I),
            re.compile(r"\bundocumented\b", re.I),
            re.compile(r"\billegal\s+alien\b", re.I),
            re.compile(r"\bvisa\b", re.I),
        ],
    ),
    (
        "sexual orientation",
        [
            re.compile(r"\bsexual\s+orientation\b", re.I),
            re.compile(r"\b(?:gay|lesbian|bisexual|homosexual)\b", re.I),
        ],
    ),
    (
        "gender identity",
        [
            re.compile(r"\bgender\b", re.I),
        ],
    ),
]


def screen_query(q: str) -> ScreenVerdict:
    """Deterministic local denylist over protected personal attributes.
    Refusal is a verdict, never an exception."""
    if not q or not q.strip():
        return ScreenVerdict(allowed=False, reason="empty query")
    for category, patterns in _DENYLIST:
        for pattern in patterns:
            if pattern.search(q):
                return ScreenVerdict(
                    allowed=False,
                    reason=f"query requests a protected personal attribute ({category}); "
                    "the system does not identify or infer protected attributes",
                )
    return ScreenVerdict(allowed=True)


def load_screening_fixtures() -> dict:
    text = resources.files("atlas.data").joinpath("screening_fixtures.json").read_text("utf-8")
    import json

    return json.loads(text)


# ---------------------------------------------------------------------------
# Domain context for enrichment

@dataclass(frozen=True)
class DomainContext:
    terminology: tuple[str, ...]
    event_hints: str = ""

    @classmethod
    def from_taxonomy(cls, taxonomy: Taxonomy, event_hints: str = "") -> "DomainContext":
        return cls(
            terminology=tuple(c.display_name for c in taxonomy.classes),
            event_hints=event_hints,
        )


# ---------------------------------------------------------------------------
# Mock backends

_SEGMENT_COLORS = ("dark", "white", "silver", "red", "blue", "black", "gray", "green")
_SEGMENT_VEHICLES = ("SUV", "sedan", "truck", "bus", "van", "motorcycle")
_SEGMENT_ACTORS = (
    "a pedestrian",
    "a group of pedestrians",
    "a man on a bike",
    "an elderly pedestrian",
    "two pedestrians on bicycles",
)
_SEGMENT_MOTIONS = (
    "decelerates and yields to",
    "approaches",
    "completes a turning movement near",
    "holds a stationary state beside",
    "accelerates through",
)
_SEGMENT_OUTCOMES = (
    "No conflict develops and the crossing completes as a legal crossing.",
    "The interaction creates a brief risk before both trajectories diverge.",
    "A threat emerges as their trajectories converge, but a gap rejection avoids a near miss.",
    "The pedestrian shows crossing intention, accepts the gap, and finishes a legal crossing.",
    "An illegal crossing unfolds while the traffic light stays red, creating a conflict.",
)


def _stable_seed(key: str) -> int:
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


def mock_caption(clip: ClipWindow) -> str:
    """Deterministic templated digest keyed by (video_id, clip index)."""
    rng = random.Random(_stable_seed(f"caption|{clip.video_id}|{clip.index}"))
    color = rng.choice(_SEGMENT_COLORS)
    vehicle = rng.choice(_SEGMENT_VEHICLES)
    actor = rng.choice(_SEGMENT_ACTORS)
    motion = rng.choice(_SEGMENT_MOTIONS)
    outcome = rng.choice(_SEGMENT_OUTCOMES)
    length = max(int(clip.length_s), 4)
    mid = length // 2
    return (
        f"At 0:02, a {color} {vehicle} {motion} the marked crosswalk while {actor} "
        f"waits on the sidewalk. Around 0:{mid:02d}, the {vehicle} driver checks the "
        f"traffic light as {actor} steps forward. {outcome} "
        f"(segment {clip.video_id}:{clip.index})"
    )


def mock_embedding(text: str, dimension: int) -> EmbeddingVector:
    """Bag of stemmed tokens hashed into ``dimension`` signed buckets, then
    unit normalized, so lexical overlap correlates with cosine. The sign bit
    keeps bucket collisions between unrelated tokens from reading as
    similarity."""
    if not text or not text.strip():
        raise BadRequestError("cannot embed empty text")
    tokens = stem_tokens(text) or [text.strip().lower()]
    buckets = [0.0] * dimension
    for token in tokens:
        digest = hashlib.sha256(f"tok|{token}".encode("utf-8")).digest()
        for offset in (0, 8):  # two buckets per token
            chunk = int.from_bytes(digest[offset : offset + 8], "big")
            sign = 1.0 if chunk & 1 else -1.0
            buckets[(chunk >> 1) % dimension] += sign
    return normalize_vector(buckets)


_EXPANSION_VEHICLE = ("motorized vehicle", "trajectory", "turning movement")
_EXPANSION_CYCLIST = ("pedestrian", "trajectory", "crossing intention")
_EXPANSION_PEDESTRIAN = ("pedestrian", "crossing intention", "legal crossing", "illegal crossing")
_EXPANSION_DRIVER = ("driver", "aggressive behavior", "turning intention")
_EXPANSION_CROSSING = ("crossing intention", "legal crossing", "illegal crossing")
_EXPANSION_TURNING = ("turning intention", "turning movement")
_EXPANSION_SPEED = ("acceleration", "deceleration")
_EXPANSION_STOPPED = ("stationary state", "deceleration")
_EXPANSION_SAFETY = ("conflict", "risk", "threat")
_EXPANSION_GAP = ("gap acceptance", "gap rejection")

_EXPANSION_STEMS: dict[str, tuple[str, ...]] = {}
for _stems, _terms in [
    (("car", "vehicle", "suv", "truck", "bus", "van", "minivan", "sedan", "motorcycle", "taxi", "automobile"), _EXPANSION_VEHICLE),
    (("cyclist", "bike", "bicycle", "biker", "cycl"), _EXPANSION_CYCLIST),
    (("pedestrian", "jaywalker", "walker"), _EXPANSION_PEDESTRIAN),
    (("driver",), _EXPANSION_DRIVER),
    (("cross", "jaywalk"), _EXPANSION_CROSSING),
    (("turn",), _EXPANSION_TURNING),
    (("speed", "accelerat", "accelerate", "acceleration", "decelerat", "decelerate", "deceleration", "slow", "brake", "brak"), _EXPANSION_SPEED),
    (("stop", "stopp", "stationary", "park", "wait", "block", "yield"), _EXPANSION_STOPPED),
    (("conflict", "collision", "collide", "crash", "risk", "risky", "danger", "dangerou", "hazard", "threat", "miss"), _EXPANSION_SAFETY),
    (("gap",), _EXPANSION_GAP),
    (("crosswalk",), ("crosswalk",)),
    (("sidewalk",), ("sidewalk",)),
    (("light", "signal"), ("traffic light",)),
    (("sign",), ("traffic sign",)),
    (("pole",), ("pole",)),
    (("basin", "drain"), ("catch basin",)),
    (("illegal",), ("illegal crossing",)),
    (("legal",), ("legal crossing",)),
]:
    for _s in _stems:
        _EXPANSION_STEMS[_s] = _terms


def mock_enrichment(q: str, ctx: DomainContext) -> str:
    """Append taxonomy terms matched by lexical stems of the query; never
    introduce terms for entities the query does not mention."""
    allowed_terms = set(ctx.terminology)
    stems = set(stem_tokens(q))
    terms = sorted(
        {
            term
            for s in stems
            for term in _EXPANSION_STEMS.get(s, ())
            if term in allowed_terms
        }
    )
    if not terms:
        return q
    return f"{q} (related: {', '.join(terms)})"


_CLIP_MARKER_RE = re.compile(r"\[clip ([^\]\s:]+):(\d+)\]")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def clip_marker(video_id: str, clip_index: int) -> str:
    return f"[clip {video_id}:{clip_index}]"


def mock_narrative(q: str, descriptor: ClipDescriptor, conversation_context: str = "") -> str:
    """Deterministic answer assembled from the evidence description sentences,
    prefixed with the prior clip marker when the conversation references one."""
    description = (descriptor.description or "").strip()
    if not description:
        raise BadRequestError("evidence missing: retrieved clip has no description")
    sentences = [s.strip() for s in _SENTENCE_SPLIT_RE.split(description) if s.strip()]
    query_stems = set(stem_tokens(q))
    picked = [s for s in sentences if set(stem_tokens(s)) & query_stems] or sentences[:2]
    parts = []
    markers = _CLIP_MARKER_RE.findall(conversation_context or "")
    if markers:
        video_id, index = markers[-1]
        parts.append(f"Continuing from {clip_marker(video_id, int(index))},")
    parts.extend(picked)
    window = f"{seconds_float(descriptor.start_s):g}s to {seconds_float(descriptor.end_s):g}s"
    parts.append(
        f"(evidence: {clip_marker(descriptor.video_id, descriptor.clip_index)}, {window})"
    )
    return " ".join(parts)


# ---------------------------------------------------------------------------
# Mock entity extraction

_COLOR = r"(?:dark|black|white|silver|grey|gray|red|blue|green|yellow|orange|brown)"
_VEH_MOD = r"(?:coach|large|small|stopped|parked|oncoming)"
_VEH_NOUN = r"(?:suv|sedan|car|truck|bus(?:es)?|van|minivan|motorcycle|taxi|vehicle)s?"
_PED_HEAD = r"(?:man|woman|person|boy|girl|rider|cyclist|pedestrian)s?"
_COUNT = r"(?:two|three|four|five|several|many)"

_MENTION_PATTERNS: list[tuple[re.Pattern, str]] = [
    (
        re.compile(
            rf"\b(?:(?:{_COUNT}|a group of)\s+)?{_PED_HEAD}\s+on\s+(?:a\s+|an\s+|the\s+)?"
            rf"(?:share-)?(?:bike|bicycle|e-bike|scooter)s?\b",
            re.I,
        ),
        "pedestrian",
    ),
    (
        re.compile(rf"\b(?:man|woman|person)\s+(?:pushing|using)\s+a\s+stroller\b", re.I),
        "pedestrian",
    ),
    (
        re.compile(rf"\b(?:a\s+)?group\s+of\s+(?:pedestrians|people|cyclists)\b", re.I),
        "pedestrian",
    ),
    (
        re.compile(rf"\b(?:(?:elderly|child|young)\s+)?pedestrians?\b", re.I),
        "pedestrian",
    ),
    (re.compile(r"\bcyclists?\b|\bjaywalkers?\b", re.I), "pedestrian"),
    (
        re.compile(rf"\b(?:(?:{_COLOR}|{_VEH_MOD})\s+)*{_VEH_NOUN}\b", re.I),
        "motorized_vehicle",
    ),
    (re.compile(r"\b(?:(?:bus|truck|taxi|van)\s+)?drivers?\b", re.I), "driver"),
    (re.compile(r"\btrajector(?:y|ies)\b", re.I), "trajectory"),
    (re.compile(r"\bacceleration\b|\baccelerat(?:es|ing|e)\b", re.I), "acceleration"),
    (re.compile(r"\bdeceleration\b|\bdecelerat(?:es|ing|e)\b", re.I), "deceleration"),
    (re.compile(r"\bstationary(?:\s+state)?\b", re.I), "stationary_state"),
    (re.compile(r"\bturning\s+intention\b", re.I), "turning_intention"),
    (re.compile(r"\bturning\s+(?:movement|maneuver)\b", re.I), "turning_movement"),
    (re.compile(r"\baggressive\s+behavior\b|\baggressively\b", re.I), "aggressive_behavior"),
    (re.compile(r"\bcrossing\s+intention\b", re.I), "crossing_intention"),
    (re.compile(r"\blegal\s+crossing\b|\blegally\s+cross(?:es|ing)?\b", re.I), "legal_crossing"),
    (
        re.compile(
            r"\billegal\s+crossing\b|\billegally\s+cross(?:es|ing)?\b|\bjaywalking\b", re.I
        ),
        "illegal_crossing",
    ),
    (
        re.compile(r"\bgap\s+acceptance\b|\baccept(?:s|ing|ed)?\s+the\s+gap\b", re.I),
        "gap_acceptance",
    ),
    (
        re.compile(r"\bgap\s+rejection\b|\breject(?:s|ing|ed)?\s+the\s+gap\b", re.I),
        "gap_rejection",
    ),
    (re.compile(r"\bthreats?\b", re.I), "threat"),
    (re.compile(r"\brisks?\b", re.I), "risk"),
    (
        re.compile(r"\bconflicts?\b|\bnear[- ]miss(?:es)?(?:\s+scenario)?\b", re.I),
        "conflict",
    ),
    (re.compile(r"\b(?:marked\s+)?crosswalks?\b", re.I), "crosswalk"),
    (re.compile(r"\bsidewalks?\b", re.I), "sidewalk"),
    (re.compile(r"\btraffic\s+(?:light|signal)s?\b|\bpedestrian\s+signals?\b", re.I), "traffic_light"),
    (re.compile(r"\btraffic\s+signs?\b|\bstop\s+signs?\b", re.I), "traffic_sign"),
    (re.compile(r"\bpoles?\b", re.I), "pole"),
    (re.compile(r"\bcatch\s+basins?\b|\bstorm\s+drains?\b", re.I), "catch_basin"),
]

_COLOR_RE = re.compile(rf"\b{_COLOR}\b", re.I)
_VEH_MOD_RE = re.compile(rf"\b{_VEH_MOD}\b", re.I)
_VEH_NOUN_RE = re.compile(rf"\b{_VEH_NOUN}\b", re.I)
_AGE_RE = re.compile(r"\b(elderly|child|young)\b", re.I)

_RELATION_CUES: list[tuple[str, re.Pattern]] = [
    ("involves", re.compile(r"\binvolv\w+\b", re.I)),
    (
        "causes",
        re.compile(
            r"\b(?:caus\w+|forc\w+|creat\w+|trigger\w+|lead(?:s|ing)?\s+to|result(?:s|ing)?\s+in)\b",
            re.I,
        ),
    ),
    ("approaches", re.compile(r"\bapproach\w*\b", re.I)),
    ("yields-to", re.compile(r"\byield\w*\b", re.I)),
    ("exploits", re.compile(r"\bexploit\w+\b", re.I)),
    ("blocks", re.compile(r"\bblock\w+\b", re.I)),
    ("conflicts-with", re.compile(r"\bcollid\w+\s+with\b", re.I)),
]

_SENTENCE_BOUNDARY_RE = re.compile(r"[.!?]")


@dataclass(frozen=True)
class ExtractionResult:
    mentions: tuple[EntityMention, ...]
    triples: tuple[tuple[int, str, int], ...] = ()
    coref_scores: dict = field(default_factory=dict)
    dropped: int = 0


def _vehicle_attributes(surface: str) -> dict:
    attrs = {}
    noun = _VEH_NOUN_RE.search(surface)
    if noun:
        token = noun.group(0).lower()
        if token.endswith("es") and token.startswith("bus"):
            token = "bus"
        elif token.endswith("s") and token not in ("bus",):
            token = token[:-1]
        attrs["type"] = token
    color = _COLOR_RE.search(surface)
    if color:
        attrs["color"] = color.group(0).lower()
    mod = _VEH_MOD_RE.search(surface)
    if mod and mod.group(0).lower() in ("stopped", "parked", "oncoming"):
        attrs["behavior"] = mod.group(0).lower()
    return attrs


def _mention_attributes(class_id: str, surface: str) -> dict:
    if class_id == "motorized_vehicle":
        return _vehicle_attributes(surface)
    if class_id == "pedestrian":
        age = _AGE_RE.search(surface)
        return {"age": age.group(0).lower()} if age else {}
    return {}


def _semantic_key(class_id: str, surface: str) -> tuple:
    return (class_id, tuple(stem_tokens(surface)))


def mock_extraction(answer: str, q: str, taxonomy: Taxonomy) -> ExtractionResult:
    """Rule-based matcher over the taxonomy lexicon: exact spans, one mention
    per semantically identical phrase, relation triples from verb cues between
    adjacent mentions within a sentence."""
    candidates = []
    for pattern, class_id in _MENTION_PATTERNS:
        try:
            resolve_class(taxonomy, class_id)
        except Exception:
            continue  # trimmed taxonomy: skip classes it does not define
        for match in pattern.finditer(answer):
            candidates.append((match.start(), match.end(), class_id))

    # Longest span wins overlaps, then the earlier start.
    candidates.sort(key=lambda c: (-(c[1] - c[0]), c[0], c[2]))
    accepted: list[tuple[int, int, str]] = []
    for cand in candidates:
        if all(cand[1] <= kept[0] or cand[0] >= kept[1] for kept in accepted):
            accepted.append(cand)
    accepted.sort(key=lambda c: c[0])

    mentions: list[EntityMention] = []
    keys: dict[tuple, int] = {}
    mention_of: list[int] = []
    for start, end, class_id in accepted:
        surface = answer[start:end]
        key = _semantic_key(class_id, surface)
        if key in keys:
            mention_of.append(keys[key])
            continue
        keys[key] = len(mentions)
        mention_of.append(len(mentions))
        mentions.append(
            EntityMention(
                surface=surface,
                class_id=class_id,
                span=(start, end),
                attributes=_mention_attributes(class_id, surface),
            )
        )

    triples: list[tuple[int, str, int]] = []
    seen_triples: set[tuple[int, str, int]] = set()
    for i in range(len(accepted) - 1):
        gap_text = answer[accepted[i][1] : accepted[i + 1][0]]
        if _SENTENCE_BOUNDARY_RE.search(gap_text):
            continue
        best: tuple[int, str] | None = None
        for label, cue in _RELATION_CUES:
            m = cue.search(gap_text)
            if m and (best is None or m.start() < best[0]):
                best = (m.start(), label)
        if best is None:
            continue
        subject, obj = mention_of[i], mention_of[i + 1]
        if subject == obj:
            continue
        triple = (subject, best[1], obj)
        if triple not in seen_triples:
            seen_triples.add(triple)
            triples.append(triple)

    return ExtractionResult(mentions=tuple(mentions), triples=tuple(triples))


def validate_extraction_payload(payload: dict, answer: str, taxonomy: Taxonomy) -> ExtractionResult:
    """Validate a backend extraction payload: out-of-taxonomy classes and
    invalid spans are dropped and counted, never raised."""
    mentions: list[EntityMention] = []
    index_map: dict[int, int] = {}
    dropped = 0
    for orig_idx, raw in enumerate(payload.get("mentions", [])):
        class_id = raw.get("class") or raw.get("class_id") or ""
        span = raw.get("span") or []
        surface = raw.get("surface", "")
        try:
            cls = resolve_class(taxonomy, class_id)
        except Exception:
            dropped += 1
            continue
        if len(span) != 2 or not (0 <= span[0] < span[1] <= len(answer)):
            dropped += 1
            continue
        if answer[span[0] : span[1]] != surface:
            dropped += 1
            continue
        attributes = {
            k: v
            for k, v in (raw.get("attributes") or {}).items()
            if k in cls.allowed_attributes
        }
        index_map[orig_idx] = len(mentions)
        mentions.append(
            EntityMention(
                surface=surface,
                class_id=cls.id,
                span=(span[0], span[1]),
                attributes=attributes,
            )
        )
    triples = []
    for raw in payload.get("triples", []):
        if len(raw) != 3:
            continue
        s, label, o = raw
        if s in index_map and o in index_map:
            triples.append((index_map[s], str(label), index_map[o]))
    coref = {}
    for raw in payload.get("coref_scores", []):
        if len(raw) == 3 and raw[0] in index_map and raw[1] in index_map:
            coref[(index_map[raw[0]], index_map[raw[1]])] = float(raw[2])
    return ExtractionResult(
        mentions=tuple(mentions), triples=tuple(triples), coref_scores=coref, dropped=dropped
    )


# ---------------------------------------------------------------------------
# Gateway facade

class ModelGateway:
    """Dispatches each role to its configured backend. Mock backends are pure
    functions; remote backends POST JSON to one endpoint per role with bounded
    retries and a hard request timeout."""

    def __init__(
        self,
        taxonomy: Taxonomy,
        config: AtlasConfig | None = None,
        prompts: dict[str, PromptTemplate] | None = None,
        transport: httpx.BaseTransport | None = None,
        sleeper=None,
        overrides: dict | None = None,
        env: dict | None = None,
    ):
        self.taxonomy = taxonomy
        self.config = config or AtlasConfig()
        self.prompts = dict(load_default_prompts())
        if prompts:
            self.prompts.update(prompts)
        for role, template in self.prompts.items():
            missing = REQUIRED_PLACEHOLDERS.get(role, frozenset()) - template.placeholders()
            if missing:
                raise BadRequestError(
                    f"prompt for role {role!r} is missing placeholders: {sorted(missing)}"
                )
        self.domain_context = DomainContext.from_taxonomy(taxonomy)
        self._overrides = overrides or {}
        self._sleep = sleeper if sleeper is not None else time.sleep
        self._transport = transport
        self._client: httpx.Client | None = None
        self._env = env

    # -- plumbing

    def backend_config(self, role: str) -> BackendConfig:
        return self.config.backend(role)

    def _http(self) -> httpx.Client:
        if self._client is None:
            kwargs = {"timeout": self.config.request_timeout_s}
            if self._transport is not None:
                kwargs["transport"] = self._transport
            self._client = httpx.Client(**kwargs)
        return self._client

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None

    def _remote_call(self, cfg: BackendConfig, payload: dict, stage: str) -> dict:
        import os

        env = self._env if self._env is not None else os.environ
        headers = {}
        credential = env.get(cfg.credentials_ref or "")
        if credential:
            headers["Authorization"] = f"Bearer {credential}"
        attempts = max(1, self.config.retry_attempts)
        delay = 0.5
        last_error = "unknown error"
        for attempt in range(1, attempts + 1):
            try:
                response = self._http().post(cfg.endpoint, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
            else:
                if response.status_code == 200:
                    body = response.json()
                    if isinstance(body, dict) and body.get("refused"):
                        raise RefusedError(
                            body.get("reason") or "refused by remote model", stage=stage
                        )
                    return body
                if 400 <= response.status_code < 500:
                    raise BackendError(
                        f"{cfg.role} backend rejected request "
                        f"(HTTP {response.status_code})",
                        stage=stage,
                        attempts=attempt,
                    )
                last_error = f"HTTP {response.status_code}"
            if attempt < attempts:
                self._sleep(delay)
                delay *= 2
        raise BackendError(
            f"{cfg.role} backend unavailable after {attempts} attempts ({last_error})",
            stage=stage,
            attempts=attempts,
        )

    # -- operations

    def screen_query(self, q: str) -> ScreenVerdict:
        return screen_query(q)

    def caption_clip(self, clip: ClipWindow) -> str:
        if "captioner" in self._overrides:
            return self._overrides["captioner"](clip)
        cfg = self.backend_config("captioner")
        if cfg.mode == "mock":
            return mock_caption(clip)
        payload = {
            "role": "captioner",
            "prompt": self.prompts["captioner"].body,
            "video_id": clip.video_id,
            "clip_index": clip.index,
            "start_s": seconds_float(clip.start_s),
            "end_s": seconds_float(clip.end_s),
            "temperature": cfg.temperature,
        }
        body = self._remote_call(cfg, payload, stage="caption")
        text = body.get("text", "")
        if not text:
            raise BackendError("captioner returned empty text", stage="caption")
        return text

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text or not text.strip():
            raise BadRequestError("cannot embed empty text")
        if "embedder" in self._overrides:
            return self._overrides["embedder"](text)
        cfg = self.backend_config("embedder")
        if cfg.mode == "mock":
            return mock_embedding(text, self.config.embedding_dimension)
        body = self._remote_call(cfg, {"role": "embedder", "text": text}, stage="embed")
        values = body.get("values")
        if not values:
            raise BackendError("embedder returned no values", stage="embed")
        return normalize_vector(values)

    def enrich_query(self, q: str, ctx: DomainContext | None = None) -> str:
        verdict = self.screen_query(q)
        if not verdict.allowed:
            raise RefusedError(verdict.reason, stage="screen")
        ctx = ctx or self.domain_context
        if "enricher" in self._overrides:
            return self._overrides["enricher"](q, ctx)
        cfg = self.backend_config("enricher")
        if cfg.mode == "mock":
            return mock_enrichment(q, ctx)
        prompt = self.prompts["enricher"].render(query=q, context_type=ctx.event_hints or "corpus")
        body = self._remote_call(
            cfg,
            {"role": "enricher", "prompt": prompt, "temperature": cfg.temperature},
            stage="enrich",
        )
        text = body.get("text", "")
        if q not in text:
            # Enrichment must preserve the original query verbatim.
            text = f"{q} {text}".strip()
        return text

    def generate_narrative(
        self, q: str, hit: RankedHit | ClipDescriptor, conversation_context: str = ""
    ) -> str:
        descriptor = hit.descriptor if isinstance(hit, RankedHit) else hit
        if "narrator" in self._overrides:
            return self._overrides["narrator"](q, descriptor, conversation_context)
        cfg = self.backend_config("narrator")
        if cfg.mode == "mock":
            return mock_narrative(q, descriptor, conversation_context)
        context = (
            f"clip {descriptor.video_id}:{descriptor.clip_index} "
            f"[{seconds_float(descriptor.start_s):g}s-{seconds_float(descriptor.end_s):g}s]\n"
            f"{descriptor.description}"
        )
        prompt = self.prompts["narrator"].render(
            user_question=q,
            context=context,
            conversation_context=conversation_context or "(none)",
        )
        body = self._remote_call(
            cfg,
            {"role": "narrator", "prompt": prompt, "temperature": cfg.temperature},
            stage="narrate",
        )
        text = body.get("text", "")
        if not text:
            raise BackendError("narrator returned empty text", stage="narrate")
        return text

    def extract(self, answer: str, q: str) -> ExtractionResult:
        if "extractor" in self._overrides:
            return self._overrides["extractor"](answer, q, self.taxonomy)
        cfg = self.backend_config("extractor")
        if cfg.mode == "mock":
            return mock_extraction(answer, q, self.taxonomy)
        prompt = self.prompts["extractor"].render(question=q)
        body = self._remote_call(
            cfg,
            {
                "role": "extractor",
                "prompt": f"{prompt}\n\nTEXT:\n{answer}",
                "answer": answer,
                "temperature": cfg.temperature,
            },
            stage="extract",
        )
        return validate_extraction_payload(body, answer, self.taxonomy)

    def extract_entities(self, answer: str, q: str) -> list[EntityMention]:
        return list(self.extract(answer, q).mentions)
