import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenegen.scene_graph import (
    AppearanceSelector,
    ClassVocabulary,
    LocationAttribute,
    ObjectSpec,
    Relation,
    RELATION_TYPES,
    INVERSE_RELATION,
    SceneGraph,
    SceneGraphError,
    encode_location_vector,
    infer_relations,
    parse_scene_graph,
    quantize_location,
    quantize_size,
    serialize_scene_graph,
    validate_scene_graph,
)


# ---------------------------------------------------------------- quantizers

def test_relation_types_closed_and_invertible():
    assert len(RELATION_TYPES) == 6
    for name in RELATION_TYPES:
        assert INVERSE_RELATION[INVERSE_RELATION[name]] == name


@pytest.mark.parametrize("xy,cell", [
    ((0.0, 0.0), 0),
    ((0.5, 0.5), 12),
    ((1.0, 1.0), 24),
    ((0.99, 0.0), 4),
    ((0.0, 0.99), 20),
])
def test_quantize_location(xy, cell):
    assert quantize_location(*xy) == cell


def test_quantize_location_out_of_range():
    with pytest.raises(SceneGraphError):
        quantize_location(-0.1, 0.5)
    with pytest.raises(SceneGraphError):
        quantize_location(0.5, 1.5)


@pytest.mark.parametrize("frac,expected", [(0.0, 0), (0.55, 5), (1.0, 9)])
def test_quantize_size(frac, expected):
    assert quantize_size(frac) == expected


def test_quantize_size_out_of_range():
    with pytest.raises(SceneGraphError):
        quantize_size(1.2)


@given(st.floats(0, 1), st.floats(0, 1))
def test_quantize_location_total(x, y):
    assert 0 <= quantize_location(x, y) < 25


def test_quantize_location_preimages():
    # points sampled inside each cell's rectangle land in that cell
    for cell in range(25):
        row, col = divmod(cell, 5)
        for fx, fy in ((0.01, 0.01), (0.5, 0.5), (0.98, 0.98)):
            x = (col + fx) / 5
            y = (row + fy) / 5
            assert quantize_location(x, y) == cell


# -------------------------------------------------------- location encoding

def test_encode_location_vector_pair():
    vec = encode_location_vector(LocationAttribute(12, 7))
    assert vec.shape == (35,)
    assert set(np.flatnonzero(vec)) == {12, 32}


def test_encode_location_vector_unspecified():
    assert not encode_location_vector(LocationAttribute()).any()


def test_encode_location_vector_zero_pair():
    vec = encode_location_vector(LocationAttribute(0, 0))
    assert set(np.flatnonzero(vec)) == {0, 25}


@given(st.integers(0, 24), st.integers(0, 9))
def test_location_roundtrip_and_weight(cell, size_bin):
    attr = LocationAttribute(cell, size_bin)
    vec = attr.encode()
    assert vec.sum() == 2
    assert vec[:25].sum() == 1 and vec[25:].sum() == 1
    assert LocationAttribute.decode(vec) == attr


def test_location_attribute_validation():
    with pytest.raises(SceneGraphError):
        LocationAttribute(25, 0)
    with pytest.raises(SceneGraphError):
        LocationAttribute(0, None)


# ---------------------------------------------------------- relation rules

def test_left_of_side_by_side():
    rels = infer_relations([(7, 0.2, 0.5, 3, 0), (9, 0.8, 0.5, 3, 1)])
    assert rels == [Relation(7, "left-of", 9)]


def test_below_subject_is_earlier():
    rels = infer_relations([(1, 0.5, 0.8, 3, 0), (2, 0.5, 0.2, 3, 1)])
    assert rels == [Relation(1, "below", 2)]


def test_surrounding_for_nested_pair():
    rels = infer_relations([(0, 0.5, 0.5, 9, 0), (1, 0.52, 0.5, 2, 1)])
    assert rels == [Relation(0, "surrounding", 1)]


def test_inside_when_smaller_first():
    rels = infer_relations([(0, 0.5, 0.5, 2, 0), (1, 0.52, 0.5, 9, 1)])
    assert rels == [Relation(0, "inside", 1)]


def test_duplicate_ids_rejected():
    with pytest.raises(SceneGraphError):
        infer_relations([(0, 0.2, 0.5, 3, 0), (0, 0.8, 0.5, 3, 1)])


def test_chain_policy_connects_consecutive():
    placed = [(i, 0.1 + 0.2 * i, 0.5, 3, i) for i in range(4)]
    rels = infer_relations(placed)
    assert [(r.subject, r.object) for r in rels] == [(0, 1), (1, 2), (2, 3)]


def test_nested_pair_added_beyond_chain():
    placed = [
        (0, 0.2, 0.5, 8, 0),
        (1, 0.8, 0.5, 5, 1),
        (2, 0.21, 0.5, 3, 2),  # nested inside object 0, not its chain predecessor
    ]
    rels = infer_relations(placed)
    pairs = {(r.subject, r.object): r.predicate for r in rels}
    assert pairs[(0, 2)] == "surrounding"
    assert (0, 1) in pairs and (1, 2) in pairs


@given(st.lists(
    st.tuples(st.floats(0, 1), st.floats(0, 1), st.integers(0, 9)),
    min_size=1, max_size=8,
))
def test_relations_wellformed(points):
    placed = [(i, x, y, s, i) for i, (x, y, s) in enumerate(points)]
    ranks = {p[0]: p[4] for p in placed}
    for rel in infer_relations(placed):
        assert rel.predicate in RELATION_TYPES
        assert ranks[rel.subject] < ranks[rel.object]


# ------------------------------------------- exhaustive sweep vs the oracle

def oracle_predicate(sub, obj, nesting_dist=0.15, nesting_gap=2):
    """Independent geometric rule, written with angle sectors."""
    dx = obj[1] - sub[1]
    dy = obj[2] - sub[2]
    dist = math.sqrt(dx * dx + dy * dy)
    gap = sub[3] - obj[3]
    if dist < nesting_dist and abs(gap) >= nesting_gap:
        return "surrounding" if gap > 0 else "inside"
    angle = math.degrees(math.atan2(-dy, dx)) % 360.0  # y up
    tie = 1e-7  # diagonal ties belong to the horizontal sectors
    if angle <= 45.0 + tie or angle >= 315.0 - tie:
        return "left-of"  # object east of subject
    if 135.0 - tie <= angle <= 225.0 + tie:
        return "right-of"
    if angle < 135.0:
        return "below"  # object north of subject
    return "above"


def test_exhaustive_two_object_sweep_matches_oracle():
    centers = [((c + 0.5) / 5, (r + 0.5) / 5) for r in range(5) for c in range(5)]
    mismatches = 0
    checked = 0
    for (ci, cj) in itertools.product(range(25), repeat=2):
        if ci == cj:
            continue
        xi, yi = centers[ci]
        xj, yj = centers[cj]
        for si, sj in itertools.product(range(10), repeat=2):
            sub = (0, xi, yi, si, 0)
            obj = (1, xj, yj, sj, 1)
            rels = infer_relations([sub, obj])
            assert len(rels) == 1
            assert rels[0].subject == 0 and rels[0].object == 1
            if rels[0].predicate != oracle_predicate(sub, obj):
                mismatches += 1
            checked += 1
    assert checked == 60000
    assert mismatches == 0


def test_nesting_rule_matches_oracle_on_close_pairs():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        xi, yi = rng.uniform(0.2, 0.8, size=2)
        xj = xi + rng.uniform(-0.2, 0.2)
        yj = yi + rng.uniform(-0.2, 0.2)
        if (xi, yi) == (xj, yj):
            continue
        si, sj = rng.integers(0, 10, size=2)
        sub = (0, xi, yi, int(si), 0)
        obj = (1, float(np.clip(xj, 0, 1)), float(np.clip(yj, 0, 1)), int(sj), 1)
        rels = infer_relations([sub, obj])
        assert rels[0].predicate == oracle_predicate(sub, obj)


# ------------------------------------------------------------- validation

def _graph():
    return SceneGraph(
        objects=[
            ObjectSpec(0, 0, LocationAttribute(2, 3)),
            ObjectSpec(1, 1),
            ObjectSpec(2, 2, appearance=AppearanceSelector("archetype", 4)),
        ],
        relations=[Relation(0, "left-of", 1), Relation(1, "above", 2)],
    )


def test_validate_ok():
    assert validate_scene_graph(_graph(), num_classes=5) == []


def test_validate_dangling_endpoint():
    g = _graph()
    g.relations.append(Relation(0, "left-of", 99))
    assert any("dangling" in v for v in validate_scene_graph(g))


def test_validate_self_relation():
    g = _graph()
    g.relations.append(Relation(2, "inside", 2))
    assert any("self-relation" in v for v in validate_scene_graph(g))


def test_validate_object_overflow():
    g = SceneGraph(objects=[ObjectSpec(i, 0) for i in range(9)])
    assert any("overflow" in v for v in validate_scene_graph(g))
    assert validate_scene_graph(SceneGraph([ObjectSpec(i, 0) for i in range(8)])) == []


def test_validate_unknown_class():
    g = SceneGraph(objects=[ObjectSpec(0, 17)])
    assert any("unknown class" in v for v in validate_scene_graph(g, num_classes=5))


# ------------------------------------------------------------ serialization

VOCAB = ClassVocabulary(["sky", "ground", "circle", "triangle", "square"])

appearance_strategy = st.one_of(
    st.builds(AppearanceSelector, st.just("archetype"), st.integers(0, 99)),
    st.builds(AppearanceSelector, st.just("imported"),
              st.text("abcdef0123456789", min_size=1, max_size=12)),
    st.just(AppearanceSelector()),
)

location_strategy = st.one_of(
    st.just(LocationAttribute()),
    st.builds(LocationAttribute, st.integers(0, 24), st.integers(0, 9)),
)


@st.composite
def scene_graphs(draw):
    n = draw(st.integers(1, 8))
    objects = [
        ObjectSpec(i, draw(st.integers(0, 4)), draw(location_strategy),
                   draw(appearance_strategy))
        for i in range(n)
    ]
    relations = []
    if n > 1:
        for _ in range(draw(st.integers(0, 2 * n))):
            a, b = draw(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)))
            if a != b:
                relations.append(Relation(a, draw(st.sampled_from(RELATION_TYPES)), b))
    return SceneGraph(objects, relations)


@settings(max_examples=50)
@given(scene_graphs())
def test_serialization_roundtrip(graph):
    assert parse_scene_graph(serialize_scene_graph(graph, VOCAB), VOCAB) == graph


def test_vocabulary_file_roundtrip(tmp_path):
    path = tmp_path / "classes.txt"
    VOCAB.to_file(path)
    loaded = ClassVocabulary.from_file(path)
    assert loaded.names == VOCAB.names
    assert loaded.content_hash() == VOCAB.content_hash()
    assert loaded.id_of("circle") == 2
    assert loaded.name_of(0) == "sky"
