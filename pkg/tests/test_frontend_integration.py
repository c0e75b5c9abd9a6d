"""Server-side half of the UI contract: the frozen interaction fixture must
match live relation inference, and the scripted session's graphs must clear
validation and render within the interactive budget."""

import json
import time
from pathlib import Path

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from make_fixture import INTERACTIONS, replay
from scenegen.archetypes import build_archetypes
from scenegen.data import synth_vocabulary
from scenegen.generate import ScenePipeline
from scenegen.scene_graph import quantize_location, validate_scene_graph, scene_graph_from_dict
from scenegen.service import create_app
from scenegen.training import GeneratorNets

FIXTURE_PATH = Path(__file__).parent.parent / "frontend" / "tests" / "fixtures" / "interactions.json"
VOCAB = synth_vocabulary()


@pytest.fixture(scope="module")
def client(tmp_path_factory):
    torch.manual_seed(1)
    nets = GeneratorNets(len(VOCAB), width=1.0 / 16.0, num_res_blocks=9).eval()
    rng = np.random.default_rng(2)
    library = build_archetypes(
        {cid: rng.normal(size=(20, 32)) for cid in range(len(VOCAB))},
        k=4, seed=0, class_names=VOCAB.names)
    pipeline = ScenePipeline(nets, VOCAB, library, resolution=64)
    app = create_app(pipeline, data_dir=tmp_path_factory.mktemp("svc"))
    return TestClient(app)


def test_fixture_file_matches_live_inference():
    doc = json.loads(FIXTURE_PATH.read_text())
    assert doc["interactions"] == INTERACTIONS
    snapshots, final_objects = replay(INTERACTIONS)
    assert doc["snapshots"] == snapshots
    assert doc["final_objects"] == final_objects


def graph_and_layout(objects):
    graph = {
        "objects": [
            {"id": o["id"], "class": o["class"],
             "location": {"cell": quantize_location(o["x"], o["y"]),
                          "size_bin": o["size_level"] - 1},
             "appearance": o["appearance"]}
            for o in objects
        ],
        "relations": [],
    }
    layout = [{"id": o["id"], "x": o["x"], "y": o["y"], "size_bin": o["size_level"] - 1}
              for o in objects]
    return graph, layout


def test_three_object_graph_validates_cleanly(client):
    snapshots, _ = replay(INTERACTIONS[:3])
    _, objects = replay(INTERACTIONS[:3])
    graph_doc, layout = graph_and_layout(objects)
    graph_doc["relations"] = snapshots[-1]["relations"]
    parsed = scene_graph_from_dict(graph_doc, VOCAB)
    assert validate_scene_graph(parsed, num_classes=len(VOCAB)) == []
    resp = client.post("/api/generate", json={"graph": graph_doc, "seed": 0})
    assert resp.status_code == 200


def test_scripted_session_relations_match_server(client):
    """Every snapshot of the 20-interaction session agrees with the server."""
    doc = json.loads(FIXTURE_PATH.read_text())
    for upto in (3, 8, 14, 20):
        snapshots, objects = replay(INTERACTIONS[:upto])
        graph_doc, layout = graph_and_layout(objects)
        resp = client.post("/api/generate",
                           json={"graph": graph_doc, "layout": layout, "seed": 1})
        assert resp.status_code == 200
        got = [(r["subject"], r["predicate"], r["object"])
               for r in resp.json()["relations"]]
        want = [(r["subject"], r["predicate"], r["object"])
                for r in snapshots[-1]["relations"]]
        assert got == want
        assert want == [(r["subject"], r["predicate"], r["object"])
                        for r in doc["snapshots"][upto - 1]["relations"]]


def test_interactive_render_budget(client):
    _, objects = replay(INTERACTIONS[:3])
    graph_doc, layout = graph_and_layout(objects)
    body = {"graph": graph_doc, "layout": layout, "seed": 2, "resolution": 64}
    client.post("/api/generate", json=body)  # warm-up
    start = time.time()
    resp = client.post("/api/generate", json=body)
    elapsed = time.time() - start
    assert resp.status_code == 200
    assert elapsed < 2.0
