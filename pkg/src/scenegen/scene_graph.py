"""Scene-graph data model: objects, spatial relations, location attributes.

A scene graph is the lingua franca of the whole system: the layout panel,
the HTTP API, the training pipeline and the networks all exchange scenes in
this representation. Relations are never typed in by the user; they are
inferred from object placement with `infer_relations`.
"""

from __future__ import annotations

import json
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

RELATION_TYPES = ("left-of", "right-of", "above", "below", "surrounding", "inside")

INVERSE_RELATION = {
    "left-of": "right-of",
    "right-of": "left-of",
    "above": "below",
    "below": "above",
    "surrounding": "inside",
    "inside": "surrounding",
}

GRID_SIDE = 5
NUM_GRID_CELLS = GRID_SIDE * GRID_SIDE  # coarse location half of the attribute vector
NUM_SIZE_BINS = 10
LOCATION_DIM = NUM_GRID_CELLS + NUM_SIZE_BINS

DEFAULT_MAX_OBJECTS = 8

# Two objects count as nested when their centers are closer than this
# (normalized units) and their size bins differ by at least the gap.
NESTING_CENTER_DIST = 0.15
NESTING_SIZE_GAP = 2

# |dx| vs |dy| ties go to the horizontal family; the comparison carries a
# tolerance so exact geometric ties perturbed by float rounding stay ties
AXIS_TIE_EPS = 1e-9

APPEARANCE_MODES = ("archetype", "imported", "random")


class SceneGraphError(ValueError):
    """Raised for inputs that violate scene-graph preconditions."""


def quantize_location(x: float, y: float) -> int:
    """Map normalized center coordinates to a row-major 5x5 grid cell."""
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise SceneGraphError(f"coordinates out of range: ({x}, {y})")
    col = min(int(x * GRID_SIDE), GRID_SIDE - 1)
    row = min(int(y * GRID_SIDE), GRID_SIDE - 1)
    return row * GRID_SIDE + col


def quantize_size(size_fraction: float) -> int:
    """Bucket a linear size fraction (sqrt of area fraction) into ten bins."""
    if not (0.0 <= size_fraction <= 1.0):
        raise SceneGraphError(f"size fraction out of range: {size_fraction}")
    return min(int(size_fraction * NUM_SIZE_BINS), NUM_SIZE_BINS - 1)


@dataclass(frozen=True)
class LocationAttribute:
    """Optional coarse placement hint: 5x5 grid cell plus one of ten size bins."""

    grid_cell: Optional[int] = None
    size_bin: Optional[int] = None

    def __post_init__(self):
        if (self.grid_cell is None) != (self.size_bin is None):
            raise SceneGraphError("grid_cell and size_bin must be set together")
        if self.grid_cell is not None and not 0 <= self.grid_cell < NUM_GRID_CELLS:
            raise SceneGraphError(f"grid cell out of range: {self.grid_cell}")
        if self.size_bin is not None and not 0 <= self.size_bin < NUM_SIZE_BINS:
            raise SceneGraphError(f"size bin out of range: {self.size_bin}")

    @property
    def specified(self) -> bool:
        return self.grid_cell is not None

    def encode(self) -> np.ndarray:
        """35-entry binary vector: one-hot cell in [0,25), one-hot bin in [25,35)."""
        vec = np.zeros(LOCATION_DIM, dtype=np.float32)
        if self.specified:
            vec[self.grid_cell] = 1.0
            vec[NUM_GRID_CELLS + self.size_bin] = 1.0
        return vec

    @classmethod
    def decode(cls, vec: np.ndarray) -> "LocationAttribute":
        vec = np.asarray(vec)
        if vec.shape != (LOCATION_DIM,):
            raise SceneGraphError(f"expected length-{LOCATION_DIM} vector, got {vec.shape}")
        if not vec.any():
            return cls()
        cells = np.flatnonzero(vec[:NUM_GRID_CELLS])
        bins = np.flatnonzero(vec[NUM_GRID_CELLS:])
        if len(cells) != 1 or len(bins) != 1:
            raise SceneGraphError("location vector is not a valid one-hot pair")
        return cls(grid_cell=int(cells[0]), size_bin=int(bins[0]))

    @classmethod
    def from_geometry(cls, x: float, y: float, size_fraction: float) -> "LocationAttribute":
        return cls(quantize_location(x, y), quantize_size(size_fraction))


def encode_location_vector(attr: LocationAttribute) -> np.ndarray:
    return attr.encode()


@dataclass(frozen=True)
class AppearanceSelector:
    """How an object's appearance vector is resolved at generation time.

    mode "archetype" looks up a slider-ordered archetype by index, "imported"
    references a stored vector copied from another image, "random" samples an
    archetype uniformly under the request seed.
    """

    mode: str = "random"
    ref: Union[int, str, None] = None

    def __post_init__(self):
        if self.mode not in APPEARANCE_MODES:
            raise SceneGraphError(f"unknown appearance mode: {self.mode!r}")
        if self.mode == "archetype" and not isinstance(self.ref, int):
            raise SceneGraphError("archetype selector needs an integer index")
        if self.mode == "imported" and not isinstance(self.ref, str):
            raise SceneGraphError("imported selector needs a string handle")
        if self.mode == "random" and self.ref is not None:
            raise SceneGraphError("random selector takes no ref")


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    class_id: int
    location: LocationAttribute = field(default_factory=LocationAttribute)
    appearance: AppearanceSelector = field(default_factory=AppearanceSelector)


@dataclass(frozen=True)
class Relation:
    subject: int
    predicate: str
    object: int

    def __post_init__(self):
        if self.predicate not in RELATION_TYPES:
            raise SceneGraphError(f"unknown predicate: {self.predicate!r}")


@dataclass
class SceneGraph:
    """Ordered objects (insertion order) plus typed directed relations."""

    objects: List[ObjectSpec] = field(default_factory=list)
    relations: List[Relation] = field(default_factory=list)

    def object_ids(self) -> List[int]:
        return [o.id for o in self.objects]

    def get(self, object_id: int) -> ObjectSpec:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)


def validate_scene_graph(
    graph: SceneGraph,
    num_classes: Optional[int] = None,
    max_objects: int = DEFAULT_MAX_OBJECTS,
) -> List[str]:
    """Collect every invariant violation; an empty list means the graph is ok."""
    violations = []
    ids = [o.id for o in graph.objects]
    seen = set()
    for i in ids:
        if i in seen:
            violations.append(f"duplicate object id {i}")
        seen.add(i)
    if len(graph.objects) > max_objects:
        violations.append(
            f"object overflow: {len(graph.objects)} objects, maximum is {max_objects}"
        )
    if num_classes is not None:
        for o in graph.objects:
            if not 0 <= o.class_id < num_classes:
                violations.append(f"unknown class {o.class_id} on object {o.id}")
    for r in graph.relations:
        if r.subject not in seen:
            violations.append(f"dangling endpoint: relation subject {r.subject}")
        if r.object not in seen:
            violations.append(f"dangling endpoint: relation object {r.object}")
        if r.subject == r.object:
            violations.append(f"self-relation on object {r.subject}")
    return violations


PlacedObject = Tuple[int, float, float, int, int]  # (id, x, y, size_bin, insertion_rank)


def _pair_predicate(dx: float, dy: float, size_gap: int,
                    center_dist: float,
                    nesting_dist: float, nesting_gap: int) -> str:
    """Predicate of the earlier-inserted object relative to the later one.

    dx, dy point from subject to object; y grows downward. Nested pairs get
    surrounding/inside by size order; otherwise the dominant axis decides,
    with ties going to the horizontal family.
    """
    if center_dist < nesting_dist and abs(size_gap) >= nesting_gap:
        return "surrounding" if size_gap > 0 else "inside"
    if abs(dx) >= abs(dy) - AXIS_TIE_EPS:
        return "left-of" if dx > 0 else "right-of"
    return "above" if dy > 0 else "below"


def infer_relations(
    placed: Sequence[PlacedObject],
    nesting_dist: float = NESTING_CENTER_DIST,
    nesting_gap: int = NESTING_SIZE_GAP,
) -> List[Relation]:
    """Infer edge labels from relative position and size of placed objects.

    Edges follow a chain policy: each object is connected to its immediate
    predecessor in insertion order, plus any pair that qualifies as nested.
    The earlier-inserted object is always the subject.
    """
    ids = [p[0] for p in placed]
    if len(set(ids)) != len(ids):
        raise SceneGraphError("duplicate object ids")
    ranks = sorted(p[4] for p in placed)
    if ranks != list(range(len(placed))):
        raise SceneGraphError("insertion ranks must form a permutation of 0..n-1")

    by_rank = sorted(placed, key=lambda p: p[4])
    relations = []
    for a in range(len(by_rank)):
        for b in range(a + 1, len(by_rank)):
            sub = by_rank[a]
            obj = by_rank[b]
            dx = obj[1] - sub[1]
            dy = obj[2] - sub[2]
            dist = math.hypot(dx, dy)
            nested = dist < nesting_dist and abs(sub[3] - obj[3]) >= nesting_gap
            if b != a + 1 and not nested:
                continue
            predicate = _pair_predicate(
                dx, dy, sub[3] - obj[3], dist, nesting_dist, nesting_gap
            )
            relations.append(Relation(sub[0], predicate, obj[0]))
    return relations


class ClassVocabulary:
    """Class-name list; index in the list is the class id."""

    def __init__(self, names: Sequence[str]):
        if len(set(names)) != len(names):
            raise SceneGraphError("duplicate class names in vocabulary")
        self.names = list(names)
        self._index = {n: i for i, n in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def id_of(self, name: str) -> int:
        if name not in self._index:
            raise SceneGraphError(f"unknown class name: {name!r}")
        return self._index[name]

    def name_of(self, class_id: int) -> str:
        if not 0 <= class_id < len(self.names):
            raise SceneGraphError(f"unknown class id: {class_id}")
        return self.names[class_id]

    def content_hash(self) -> str:
        payload = "\n".join(self.names).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]

    @classmethod
    def from_file(cls, path) -> "ClassVocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([ln.strip() for ln in lines if ln.strip()])

    def to_file(self, path) -> None:
        Path(path).write_text("\n".join(self.names) + "\n", encoding="utf-8")


def scene_graph_to_dict(graph: SceneGraph, vocab: ClassVocabulary) -> dict:
    return {
        "objects": [
            {
                "id": o.id,
                "class": vocab.name_of(o.class_id),
                "location": {"cell": o.location.grid_cell, "size_bin": o.location.size_bin},
                "appearance": {"mode": o.appearance.mode, "ref": o.appearance.ref},
            }
            for o in graph.objects
        ],
        "relations": [
            {"subject": r.subject, "predicate": r.predicate, "object": r.object}
            for r in graph.relations
        ],
    }


def scene_graph_from_dict(doc: dict, vocab: ClassVocabulary) -> SceneGraph:
    try:
        objects = [
            ObjectSpec(
                id=int(entry["id"]),
                class_id=vocab.id_of(entry["class"]),
                location=LocationAttribute(
                    grid_cell=entry.get("location", {}).get("cell"),
                    size_bin=entry.get("location", {}).get("size_bin"),
                ),
                appearance=AppearanceSelector(
                    mode=entry.get("appearance", {}).get("mode", "random"),
                    ref=entry.get("appearance", {}).get("ref"),
                ),
            )
            for entry in doc.get("objects", [])
        ]
        relations = [
            Relation(int(r["subject"]), r["predicate"], int(r["object"]))
            for r in doc.get("relations", [])
        ]
    except (KeyError, TypeError) as exc:
        raise SceneGraphError(f"malformed scene-graph document: {exc}") from exc
    return SceneGraph(objects=objects, relations=relations)


def serialize_scene_graph(graph: SceneGraph, vocab: ClassVocabulary) -> str:
    return json.dumps(scene_graph_to_dict(graph, vocab), indent=2)


def parse_scene_graph(payload: str, vocab: ClassVocabulary) -> SceneGraph:
    return scene_graph_from_dict(json.loads(payload), vocab)
