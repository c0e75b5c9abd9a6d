"""End-to-end seeded inference: scene graph in, image plus geometry out."""

from __future__ import annotations

import io
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import torch
from PIL import Image

from .archetypes import ArchetypeLibrary
from .data import image_to_uint8
from .layout import clamp_box, compose_from_warped, warp_masks
from .nets import NOISE_DIM
from .scene_graph import (
    ClassVocabulary,
    RELATION_TYPES,
    SceneGraph,
    SceneGraphError,
    validate_scene_graph,
)
from .training import GeneratorNets, load_generator

SUPPORTED_RESOLUTIONS = (64, 128, 256)


class ValidationFailure(ValueError):
    def __init__(self, violations: List[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class ImportedAppearanceStore:
    """File-backed store of appearance vectors copied from uploaded images."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, handle: str) -> Path:
        if not handle.replace("-", "").isalnum():
            raise KeyError(handle)
        return self.root / f"{handle}.npy"

    def put(self, vector: np.ndarray) -> str:
        handle = uuid.uuid4().hex
        path = self._path(handle)
        tmp = path.with_name(f"{handle}.tmp.npy")  # np.save insists on .npy
        np.save(tmp, vector.astype(np.float32))
        tmp.replace(path)
        return handle

    def get(self, handle: str) -> np.ndarray:
        path = self._path(handle)
        if not path.exists():
            raise KeyError(handle)
        return np.load(path)

    def delete(self, handle: str) -> None:
        path = self._path(handle)
        if not path.exists():
            raise KeyError(handle)
        path.unlink()


@dataclass
class GeneratedScene:
    image: np.ndarray  # [H, W, 3] uint8
    boxes: np.ndarray  # [n, 4] clamped/ordered ratios, object order
    masks: np.ndarray  # [n, 64, 64] float32 in (0, 1)
    seed: int
    elapsed_ms: float

    def png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.image).save(buf, format="PNG")
        return buf.getvalue()


class ScenePipeline:
    """Frozen generator snapshot plus the appearance sources it can resolve."""

    def __init__(self, nets: GeneratorNets, vocab: ClassVocabulary,
                 archetypes: ArchetypeLibrary,
                 imported_store: Optional[ImportedAppearanceStore] = None,
                 resolution: int = 64, device: str = "cpu"):
        self.nets = nets.to(device).eval()
        self.vocab = vocab
        self.archetypes = archetypes
        self.imported_store = imported_store
        self.resolution = resolution
        self.device = device

    @classmethod
    def load(cls, checkpoint_path, archetypes_path,
             imported_store: Optional[ImportedAppearanceStore] = None,
             device: str = "cpu") -> "ScenePipeline":
        from .archetypes import load_library

        nets, manifest = load_generator(checkpoint_path, device=device)
        vocab = ClassVocabulary(manifest["class_names"])
        lib = load_library(archetypes_path)
        return cls(nets, vocab, lib, imported_store,
                   resolution=manifest["resolution"], device=device)

    def resolve_appearances(self, graph: SceneGraph, rng: np.random.Generator) -> np.ndarray:
        vectors = []
        for obj in graph.objects:
            sel = obj.appearance
            if sel.mode == "archetype":
                vectors.append(self.archetypes.get_archetype(obj.class_id, sel.ref))
            elif sel.mode == "imported":
                if self.imported_store is None:
                    raise KeyError(sel.ref)
                vectors.append(self.imported_store.get(sel.ref))
            else:
                vectors.append(self.archetypes.sample_random_archetype(obj.class_id, rng))
        return np.stack(vectors).astype(np.float32) if vectors else np.zeros((0, 32), np.float32)

    def generate(self, graph: SceneGraph, seed: Optional[int] = None,
                 resolution: Optional[int] = None) -> GeneratedScene:
        started = time.time()
        resolution = resolution or self.resolution
        if resolution not in SUPPORTED_RESOLUTIONS:
            raise ValidationFailure([f"unsupported resolution: {resolution}"])
        if not graph.objects:
            raise ValidationFailure(["empty scene"])
        violations = validate_scene_graph(graph, num_classes=len(self.vocab))
        if violations:
            raise ValidationFailure(violations)
        if seed is None:
            seed = int(np.random.SeedSequence().entropy % (2 ** 31))

        rng = np.random.default_rng(seed)
        torch_rng = torch.Generator(device="cpu").manual_seed(seed)

        n = len(graph.objects)
        class_ids = torch.tensor([o.class_id for o in graph.objects], dtype=torch.long)
        loc_vecs = torch.from_numpy(
            np.stack([o.location.encode() for o in graph.objects]))
        pos_of = {o.id: k for k, o in enumerate(graph.objects)}
        rel_index = {name: i for i, name in enumerate(RELATION_TYPES)}
        edges = [(pos_of[r.subject], pos_of[r.object]) for r in graph.relations]
        edge_types = [rel_index[r.predicate] for r in graph.relations]

        appearance = torch.from_numpy(self.resolve_appearances(graph, rng))
        with torch.no_grad():
            layout_vecs = self.nets.graph_net(
                class_ids,
                loc_vecs,
                torch.tensor(edges, dtype=torch.long).reshape(-1, 2),
                torch.tensor(edge_types, dtype=torch.long),
            )
            noise = torch.randn(n, NOISE_DIM, generator=torch_rng)
            masks = self.nets.mask_net(layout_vecs, noise)
            boxes = clamp_box(self.nets.box_net(layout_vecs))
            warped = warp_masks(masks, boxes, resolution, resolution)
            layout = compose_from_warped(class_ids, warped, appearance,
                                         self.nets.num_classes)
            image = self.nets.renderer(layout)[0]
        return GeneratedScene(
            image=image_to_uint8(image.numpy()),
            boxes=boxes.numpy(),
            masks=masks.numpy(),
            seed=seed,
            elapsed_ms=(time.time() - started) * 1000.0,
        )

    def embed_crop(self, image_pm1: torch.Tensor, box: torch.Tensor) -> np.ndarray:
        """Appearance vector of a box region in an externally supplied image."""
        from .layout import crop_regions

        with torch.no_grad():
            crop = crop_regions(image_pm1.unsqueeze(0), clamp_box(box).unsqueeze(0))
            return self.nets.appearance_net(crop)[0].numpy()

    def archetype_thumbnail(self, class_id: int, index: int, seed: int = 0) -> bytes:
        """Single-object render previewing one archetype, as PNG bytes."""
        from .scene_graph import AppearanceSelector, LocationAttribute, ObjectSpec

        graph = SceneGraph(objects=[ObjectSpec(
            id=0, class_id=class_id,
            location=LocationAttribute(grid_cell=12, size_bin=6),
            appearance=AppearanceSelector(mode="archetype", ref=index),
        )])
        return self.generate(graph, seed=seed, resolution=64).png_bytes()
