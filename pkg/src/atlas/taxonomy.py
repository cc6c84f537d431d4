"""Fixed crossroad-interaction taxonomy.

The taxonomy is the closed vocabulary behind entity extraction, graph
validation and UI color coding: five categories, a class list per category,
and a closed set of relation labels. Loaded once, immutable afterwards;
deployments may swap in their own document with the same schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

from .errors import BadRequestError, NotFoundError

CATEGORY_IDS = (
    "fundamental-entities",
    "motion-descriptors",
    "individual-behaviors",
    "safety-situations",
    "environment-entities",
)

GROUNDABLE_MODES = ("dynamic", "static", "abstract")


def normalize_token(token: str) -> str:
    """Canonical lookup form: lowercase, spaces/hyphens collapsed to underscores."""
    return "_".join(token.strip().lower().replace("-", " ").replace("_", " ").split())


@dataclass(frozen=True)
class TaxonomyCategory:
    id: str
    display_color: str


@dataclass(frozen=True)
class TaxonomyClass:
    id: str
    category: str
    allowed_attributes: tuple[str, ...] = ()
    groundable_as: str = "abstract"

    @property
    def display_name(self) -> str:
        return self.id.replace("_", " ")


@dataclass(frozen=True)
class Taxonomy:
    categories: tuple[TaxonomyCategory, ...]
    classes: tuple[TaxonomyClass, ...]
    relation_labels: tuple[str, ...]
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_by_id", {normalize_token(c.id): c for c in self.classes}
        )

    def class_ids(self) -> list[str]:
        return [c.id for c in self.classes]

    def category_of(self, class_id: str) -> TaxonomyCategory:
        cls = resolve_class(self, class_id)
        for cat in self.categories:
            if cat.id == cls.category:
                return cat
        raise NotFoundError(f"unknown category: {cls.category}")

    def static_class_ids(self) -> list[str]:
        return [c.id for c in self.classes if c.groundable_as == "static"]

    def dynamic_class_ids(self) -> list[str]:
        return [c.id for c in self.classes if c.groundable_as == "dynamic"]

    def has_relation(self, label: str) -> bool:
        return label in self.relation_labels

    def to_document(self) -> dict:
        return {
            "categories": [
                {"id": cat.id, "color": cat.display_color} for cat in self.categories
            ],
            "classes": [
                {
                    "id": c.id,
                    "category": c.category,
                    "attributes": list(c.allowed_attributes),
                    "groundable_as": c.groundable_as,
                }
                for c in self.classes
            ],
            "relations": list(self.relation_labels),
        }


def load_taxonomy(source: str | bytes | dict) -> Taxonomy:
    """Parse and validate a taxonomy document (JSON text or parsed dict)."""
    if isinstance(source, (str, bytes)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise BadRequestError(f"malformed taxonomy document: {exc}") from exc
    else:
        doc = source
    if not isinstance(doc, dict):
        raise BadRequestError("malformed taxonomy document: expected an object")
    for key in ("categories", "classes", "relations"):
        if key not in doc:
            raise BadRequestError(f"taxonomy document missing '{key}'")

    categories = []
    seen_cats: set[str] = set()
    seen_colors: set[str] = set()
    for entry in doc["categories"]:
        cat_id = entry["id"]
        color = entry["color"]
        if cat_id not in CATEGORY_IDS:
            raise BadRequestError(f"unknown taxonomy category id: {cat_id!r}")
        if cat_id in seen_cats:
            raise BadRequestError(f"duplicate category id: {cat_id!r}")
        if color in seen_colors:
            raise BadRequestError(f"duplicate category color: {color!r}")
        seen_cats.add(cat_id)
        seen_colors.add(color)
        categories.append(TaxonomyCategory(id=cat_id, display_color=color))
    if len(categories) != 5:
        raise BadRequestError(
            f"taxonomy must declare exactly 5 categories, got {len(categories)}"
        )

    classes = []
    seen_ids: set[str] = set()
    for entry in doc["classes"]:
        cls_id = entry["id"]
        norm = normalize_token(cls_id)
        if norm in seen_ids:
            raise BadRequestError(f"duplicate class id: {cls_id!r}")
        seen_ids.add(norm)
        if entry["category"] not in seen_cats:
            raise BadRequestError(
                f"class {cls_id!r} references unknown category {entry['category']!r}"
            )
        mode = entry.get("groundable_as", "abstract")
        if mode not in GROUNDABLE_MODES:
            raise BadRequestError(f"class {cls_id!r} has invalid groundable_as {mode!r}")
        classes.append(
            TaxonomyClass(
                id=cls_id,
                category=entry["category"],
                allowed_attributes=tuple(entry.get("attributes", ())),
                groundable_as=mode,
            )
        )

    relations = tuple(doc["relations"])
    if not relations:
        raise BadRequestError("taxonomy relation set must not be empty")

    # Static grounding is reserved for infrastructure.
    for cls in classes:
        if cls.groundable_as == "static" and cls.category != "environment-entities":
            raise BadRequestError(
                f"static class {cls.id!r} must belong to environment-entities"
            )

    return Taxonomy(
        categories=tuple(categories), classes=tuple(classes), relation_labels=relations
    )


def default_taxonomy() -> Taxonomy:
    """The bundled taxonomy: 5 categories, 24 classes, 7 relation labels."""
    text = resources.files("atlas.data").joinpath("taxonomy.json").read_text("utf-8")
    return load_taxonomy(text)


def resolve_class(taxonomy: Taxonomy, class_id: str) -> TaxonomyClass:
    """Case-insensitive class lookup on normalized tokens."""
    cls = taxonomy._by_id.get(normalize_token(class_id))
    if cls is None:
        raise NotFoundError(f"unknown taxonomy class: {class_id!r}")
    return cls


def category_color(taxonomy: Taxonomy, class_id: str) -> str:
    return taxonomy.category_of(class_id).display_color
