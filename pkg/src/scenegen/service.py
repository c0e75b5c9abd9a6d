"""HTTP boundary for the layout-editor UI: generation, appearance import, sessions."""

from __future__ import annotations

import base64
import binascii
import io
import json
import os
import re
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import torch
from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel

from .data import uint8_to_image
from .generate import ImportedAppearanceStore, ScenePipeline, ValidationFailure
from .scene_graph import SceneGraphError, infer_relations, scene_graph_from_dict

DATA_DIR_ENV = "SCENEGEN_DATA_DIR"
_SESSION_ID = re.compile(r"^[A-Za-z0-9_-]{1,64}$")


def default_data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, Path.home() / ".scenegen"))


class SessionStore:
    """One JSON file per session id, written atomically, serialized per id."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: Dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _path(self, session_id: str) -> Path:
        if not _SESSION_ID.match(session_id):
            raise KeyError(session_id)
        return self.root / f"{session_id}.json"

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def save(self, session_id: str, doc: dict) -> None:
        path = self._path(session_id)
        with self._lock(session_id):
            tmp = path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(doc))
            tmp.replace(path)

    def load(self, session_id: str) -> dict:
        path = self._path(session_id)
        if not path.exists():
            raise KeyError(session_id)
        return json.loads(path.read_text())


class PlacedObjectModel(BaseModel):
    id: int
    x: float
    y: float
    size_bin: int


class GenerateRequest(BaseModel):
    graph: Dict[str, Any]
    layout: Optional[List[PlacedObjectModel]] = None  # insertion order
    resolution: Optional[int] = None
    seed: Optional[int] = None
    vocab_hash: Optional[str] = None


class ObjectGeometry(BaseModel):
    id: int
    box: List[float]
    mask_png_base64: str


class RelationModel(BaseModel):
    subject: int
    predicate: str
    object: int


class GenerateResponse(BaseModel):
    image_png_base64: str
    objects: List[ObjectGeometry]
    relations: List[RelationModel]  # the relations the model actually used
    seed: int
    elapsed_ms: float
    model_version: str
    resolution: int

    model_config = {"protected_namespaces": ()}


class ImportRequest(BaseModel):
    image_png_base64: str
    box: List[float]
    class_name: str


class ImportResponse(BaseModel):
    handle: str
    vector: List[float]


def _mask_thumbnail_png(mask: np.ndarray) -> str:
    img = Image.fromarray((np.clip(mask, 0, 1) * 255).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def create_app(pipeline: Optional[ScenePipeline] = None,
               data_dir: Optional[Path] = None) -> FastAPI:
    """Build the service; a missing pipeline yields 503 on model endpoints."""
    data_dir = Path(data_dir) if data_dir is not None else default_data_dir()
    sessions = SessionStore(data_dir / "sessions")
    if pipeline is not None and pipeline.imported_store is None:
        pipeline.imported_store = ImportedAppearanceStore(data_dir / "imported")

    app = FastAPI(title="scenegen", version="0.1.0")

    def need_pipeline() -> ScenePipeline:
        if pipeline is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return pipeline

    @app.post("/api/generate", response_model=GenerateResponse)
    def generate(req: GenerateRequest):
        pipe = need_pipeline()
        if req.vocab_hash is not None and req.vocab_hash != pipe.vocab.content_hash():
            raise HTTPException(status_code=409, detail="class vocabulary mismatch")
        try:
            graph = scene_graph_from_dict(req.graph, pipe.vocab)
            if req.layout is not None:
                # relations are always re-derived server-side from the layout,
                # so client and server inference cannot drift apart
                placed = [(p.id, p.x, p.y, p.size_bin, rank)
                          for rank, p in enumerate(req.layout)]
                graph.relations = infer_relations(placed)
            result = pipe.generate(graph, seed=req.seed, resolution=req.resolution)
        except ValidationFailure as exc:
            raise HTTPException(status_code=400,
                                detail={"violations": exc.violations})
        except SceneGraphError as exc:
            raise HTTPException(status_code=400, detail={"violations": [str(exc)]})
        except (KeyError, IndexError) as exc:
            raise HTTPException(status_code=404, detail=f"unknown reference: {exc}")
        return GenerateResponse(
            image_png_base64=base64.b64encode(result.png_bytes()).decode("ascii"),
            objects=[
                ObjectGeometry(
                    id=obj.id,
                    box=[float(v) for v in result.boxes[k]],
                    mask_png_base64=_mask_thumbnail_png(result.masks[k]),
                )
                for k, obj in enumerate(graph.objects)
            ],
            relations=[
                RelationModel(subject=r.subject, predicate=r.predicate, object=r.object)
                for r in graph.relations
            ],
            seed=result.seed,
            elapsed_ms=result.elapsed_ms,
            model_version="scenegen-0.1.0",
            resolution=req.resolution or pipe.resolution,
        )

    @app.post("/api/appearance/import", response_model=ImportResponse)
    def import_appearance(req: ImportRequest):
        pipe = need_pipeline()
        if pipe.vocab is None or req.class_name not in pipe.vocab:
            raise HTTPException(status_code=400, detail="unknown class")
        try:
            raw = base64.b64decode(req.image_png_base64, validate=True)
            pil = Image.open(io.BytesIO(raw)).convert("RGB")
        except (binascii.Error, UnidentifiedImageError, OSError, ValueError):
            raise HTTPException(status_code=415, detail="unsupported image format")
        if len(req.box) != 4:
            raise HTTPException(status_code=400, detail="box needs four coordinates")
        x1, y1, x2, y2 = req.box
        if not (0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1):
            raise HTTPException(status_code=400, detail="box out of range")
        image = torch.from_numpy(uint8_to_image(np.asarray(pil)))
        vector = pipe.embed_crop(image, torch.tensor(req.box, dtype=torch.float32))
        if pipe.imported_store is None:
            raise HTTPException(status_code=503, detail="no appearance store")
        handle = pipe.imported_store.put(vector)
        return ImportResponse(handle=handle, vector=[float(v) for v in vector])

    @app.get("/api/classes")
    def classes():
        pipe = need_pipeline()
        return {"classes": pipe.vocab.names, "vocab_hash": pipe.vocab.content_hash()}

    @app.get("/api/archetypes/{class_name}")
    def archetypes(class_name: str):
        pipe = need_pipeline()
        if class_name not in pipe.vocab:
            raise HTTPException(status_code=404, detail="unknown class")
        class_id = pipe.vocab.id_of(class_name)
        count = pipe.archetypes.archetype_count(class_id)
        return {
            "class": class_name,
            "count": count,
            "archetypes": [
                {"index": i,
                 "thumbnail_url": f"/api/archetypes/{class_name}/{i}/thumbnail.png"}
                for i in range(count)
            ],
        }

    @app.get("/api/archetypes/{class_name}/{index}/thumbnail.png")
    def archetype_thumbnail(class_name: str, index: int):
        pipe = need_pipeline()
        if class_name not in pipe.vocab:
            raise HTTPException(status_code=404, detail="unknown class")
        class_id = pipe.vocab.id_of(class_name)
        try:
            png = pipe.archetype_thumbnail(class_id, index)
        except IndexError:
            raise HTTPException(status_code=404, detail="archetype index out of range")
        return Response(content=png, media_type="image/png")

    @app.put("/api/sessions/{session_id}")
    def save_session(session_id: str, doc: Dict[str, Any]):
        try:
            sessions.save(session_id, doc)
        except KeyError:
            raise HTTPException(status_code=400, detail="invalid session id")
        return {"ok": True, "id": session_id}

    @app.get("/api/sessions/{session_id}")
    def load_session(session_id: str):
        try:
            return sessions.load(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.get("/api/spec")
    def api_spec():
        return app.openapi()

    ui_dir = os.environ.get("SCENEGEN_UI_DIR")
    if ui_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend"
        ui_dir = candidate if (candidate / "dist").is_dir() else None
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
