"""Training samples: synthetic layered-shape scenes and the on-disk dataset format.

The synthetic generator is the desk-scale stand-in for a real stuff-segmented
dataset: every scene has a sky band, a ground band and 1..6 colored foreground
shapes with exact masks and tight boxes. Same seed, same bytes.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from .scene_graph import (
    AppearanceSelector,
    ClassVocabulary,
    LocationAttribute,
    ObjectSpec,
    SceneGraph,
    infer_relations,
)

logger = logging.getLogger(__name__)

MASK_SIZE = 64
MAX_OBJECTS = 8

SYNTH_CLASSES = ("sky", "ground", "circle", "triangle", "square")

# base RGB per class; per-object shading supplies the appearance variation
_BASE_COLORS = {
    "sky": (0.45, 0.70, 0.95),
    "ground": (0.42, 0.32, 0.12),
    "circle": (0.85, 0.15, 0.10),
    "triangle": (0.90, 0.80, 0.10),
    "square": (0.60, 0.15, 0.70),
}


def synth_vocabulary() -> ClassVocabulary:
    return ClassVocabulary(SYNTH_CLASSES)


@dataclass
class TrainingSample:
    """One scene: image, per-object ground truth and the derived graph."""

    image: np.ndarray  # [3, H, W] float32 in [-1, 1]
    class_ids: np.ndarray  # [n] int64
    boxes: np.ndarray  # [n, 4] float32 ratios, tight around the masks
    masks: np.ndarray  # [n, 64, 64] float32 binary, box-local
    crops: np.ndarray  # [n, 3, 64, 64] float32, resized box regions
    graph: SceneGraph
    location_vectors: np.ndarray  # [n, 35] float32

    @property
    def num_objects(self) -> int:
        return len(self.class_ids)


@dataclass
class SyntheticConfig:
    image_size: int = 64
    min_shapes: int = 1
    max_shapes: int = 6
    shape_classes: Tuple[str, ...] = ("circle", "triangle", "square")
    shape_weights: Tuple[float, ...] = (1.0, 1.0, 1.0)
    min_half_extent: float = 0.06
    max_half_extent: float = 0.18
    horizon_range: Tuple[float, float] = (0.35, 0.65)

    def __post_init__(self):
        if len(self.shape_weights) != len(self.shape_classes):
            raise ValueError("one weight per shape class")


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Channel-last bilinear resize with pixel-center sampling."""
    h, w = img.shape[:2]
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    tl = img[np.ix_(y0, x0)]
    tr = img[np.ix_(y0, x1)]
    bl = img[np.ix_(y1, x0)]
    br = img[np.ix_(y1, x1)]
    if img.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = tl * (1 - fx) + tr * fx
    bot = bl * (1 - fx) + br * fx
    return top * (1 - fy) + bot * fy


def _resize_nearest(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape[:2]
    ys = np.minimum(((np.arange(out_h) + 0.5) * h / out_h).astype(int), h - 1)
    xs = np.minimum(((np.arange(out_w) + 0.5) * w / out_w).astype(int), w - 1)
    return img[np.ix_(ys, xs)]


def mask_bounding_box(mask: np.ndarray) -> Optional[np.ndarray]:
    """Tight normalized box around a full-frame binary mask, or None if empty."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if len(rows) == 0 or len(cols) == 0:
        return None
    h, w = mask.shape
    return np.array(
        [cols[0] / w, rows[0] / h, (cols[-1] + 1) / w, (rows[-1] + 1) / h],
        dtype=np.float32,
    )


def _box_local_mask(mask: np.ndarray, box: np.ndarray) -> np.ndarray:
    h, w = mask.shape
    c0, r0 = int(round(box[0] * w)), int(round(box[1] * h))
    c1, r1 = int(round(box[2] * w)), int(round(box[3] * h))
    crop = mask[r0:r1, c0:c1]
    return _resize_nearest(crop, MASK_SIZE, MASK_SIZE).astype(np.float32)


def _box_crop(image_hwc: np.ndarray, box: np.ndarray) -> np.ndarray:
    h, w = image_hwc.shape[:2]
    c0, r0 = int(round(box[0] * w)), int(round(box[1] * h))
    c1, r1 = int(round(box[2] * w)), int(round(box[3] * h))
    crop = image_hwc[r0:r1, c0:c1]
    return _resize_bilinear(crop, MASK_SIZE, MASK_SIZE)


def build_training_graph(
    class_ids: Sequence[int],
    boxes: np.ndarray,
    max_objects: int = MAX_OBJECTS,
) -> Tuple[SceneGraph, np.ndarray, List[int]]:
    """Derive the scene graph plus location vectors from ground-truth boxes.

    Relations come from the same placement rules the layout panel uses,
    applied to box centers and sizes in annotation order. Returns the graph,
    the [n, 35] location matrix and the kept object indices (scenes beyond
    the object cap keep the largest boxes).
    """
    boxes = np.asarray(boxes, dtype=np.float32)
    keep = list(range(len(class_ids)))
    if len(keep) > max_objects:
        areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
        keep = sorted(sorted(range(len(class_ids)), key=lambda i: -areas[i])[:max_objects])
        logger.warning("scene truncated from %d to %d objects", len(class_ids), max_objects)

    placed = []
    objects = []
    loc_rows = []
    for rank, idx in enumerate(keep):
        x1, y1, x2, y2 = boxes[idx]
        cx = float((x1 + x2) / 2)
        cy = float((y1 + y2) / 2)
        size_fraction = float(math.sqrt(max(x2 - x1, 0.0) * max(y2 - y1, 0.0)))
        attr = LocationAttribute.from_geometry(cx, cy, min(size_fraction, 1.0))
        placed.append((rank, cx, cy, attr.size_bin, rank))
        objects.append(
            ObjectSpec(id=rank, class_id=int(class_ids[idx]), location=attr,
                       appearance=AppearanceSelector())
        )
        loc_rows.append(attr.encode())
    graph = SceneGraph(objects=objects, relations=infer_relations(placed))
    return graph, np.stack(loc_rows) if loc_rows else np.zeros((0, 35), np.float32), keep


def _shade(rng: np.random.Generator, class_name: str) -> np.ndarray:
    base = np.array(_BASE_COLORS[class_name])
    factor = rng.uniform(0.55, 1.05)
    jitter = rng.uniform(-0.08, 0.08, size=3)
    return np.clip(base * factor + jitter, 0.0, 1.0)


def _shape_mask(kind: str, cx: float, cy: float, r: float, size: int) -> np.ndarray:
    coords = (np.arange(size) + 0.5) / size
    xx = coords[None, :]
    yy = coords[:, None]
    if kind == "circle":
        return ((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r).astype(np.float32)
    if kind == "square":
        return (np.maximum(np.abs(xx - cx), np.abs(yy - cy)) <= r).astype(np.float32)
    if kind == "triangle":
        inside_y = (yy >= cy - r) & (yy <= cy + r)
        return (inside_y & (np.abs(xx - cx) <= (yy - cy + r) / 2)).astype(np.float32)
    raise ValueError(f"unknown shape kind: {kind}")


def make_scene(seed: int, index: int, config: SyntheticConfig = SyntheticConfig()) -> TrainingSample:
    """Render one deterministic scene; (seed, index) fully determine the bytes."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    vocab = synth_vocabulary()
    size = config.image_size

    horizon = rng.uniform(*config.horizon_range)
    coords = (np.arange(size) + 0.5) / size
    sky_rows = coords < horizon
    image = np.zeros((size, size, 3), dtype=np.float64)
    image[sky_rows, :, :] = _shade(rng, "sky")
    image[~sky_rows, :, :] = _shade(rng, "ground")

    full_masks = [
        np.repeat(sky_rows[:, None], size, axis=1).astype(np.float32),
        np.repeat(~sky_rows[:, None], size, axis=1).astype(np.float32),
    ]
    class_ids = [vocab.id_of("sky"), vocab.id_of("ground")]

    weights = np.asarray(config.shape_weights, dtype=np.float64)
    weights = weights / weights.sum()
    n_shapes = int(rng.integers(config.min_shapes, config.max_shapes + 1))
    for _ in range(n_shapes):
        kind = str(rng.choice(config.shape_classes, p=weights))
        cx = rng.uniform(0.12, 0.88)
        cy = rng.uniform(0.15, 0.9)
        r = rng.uniform(config.min_half_extent, config.max_half_extent)
        mask = _shape_mask(kind, cx, cy, r, size)
        if not mask.any():
            continue
        image[mask > 0] = _shade(rng, kind)
        full_masks.append(mask)
        class_ids.append(vocab.id_of(kind))

    boxes = np.stack([mask_bounding_box(m) for m in full_masks])
    graph, loc_vectors, keep = build_training_graph(class_ids, boxes)

    image_pm1 = (image * 2.0 - 1.0).astype(np.float32)
    local_masks = np.stack([_box_local_mask(full_masks[i], boxes[i]) for i in keep])
    crops = np.stack([
        _box_crop(image_pm1.astype(np.float64), boxes[i]).astype(np.float32) for i in keep
    ])
    return TrainingSample(
        image=np.ascontiguousarray(image_pm1.transpose(2, 0, 1)),
        class_ids=np.asarray([class_ids[i] for i in keep], dtype=np.int64),
        boxes=boxes[np.asarray(keep)],
        masks=local_masks,
        crops=np.ascontiguousarray(crops.transpose(0, 3, 1, 2)),
        graph=graph,
        location_vectors=loc_vectors.astype(np.float32),
    )


def synth_dataset(seed: int, n_scenes: int,
                  config: SyntheticConfig = SyntheticConfig()) -> List[TrainingSample]:
    if n_scenes < 1:
        raise ValueError("need at least one scene")
    return [make_scene(seed, i, config) for i in range(n_scenes)]


def image_to_uint8(image_pm1: np.ndarray) -> np.ndarray:
    """[-1, 1] float CHW to HWC uint8."""
    hwc = np.clip((image_pm1.transpose(1, 2, 0) + 1.0) * 127.5, 0, 255)
    return np.round(hwc).astype(np.uint8)


def uint8_to_image(hwc: np.ndarray) -> np.ndarray:
    return (hwc.astype(np.float32) / 127.5 - 1.0).transpose(2, 0, 1)


def save_dataset(samples: Sequence[TrainingSample], root, vocab: ClassVocabulary) -> None:
    """Write the directory layout: images/, masks/ and a JSON index per scene."""
    root = Path(root)
    for sub in ("images", "masks", "index"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    vocab.to_file(root / "classes.txt")
    for i, s in enumerate(samples):
        stem = f"{i:05d}"
        Image.fromarray(image_to_uint8(s.image)).save(root / "images" / f"{stem}.png")
        entries = []
        for k in range(s.num_objects):
            mask_name = f"{stem}_{k}.png"
            mask8 = (s.masks[k] * 255).astype(np.uint8)
            Image.fromarray(mask8, mode="L").save(root / "masks" / mask_name)
            entries.append({
                "class": vocab.name_of(int(s.class_ids[k])),
                "box": [float(v) for v in s.boxes[k]],
                "mask": f"masks/{mask_name}",
            })
        index = {"image": f"images/{stem}.png", "objects": entries}
        (root / "index" / f"{stem}.json").write_text(json.dumps(index, indent=2))


def load_dataset(root, vocab: Optional[ClassVocabulary] = None) -> List[TrainingSample]:
    """Read a dataset directory back into memory; crops and graphs are rederived."""
    root = Path(root)
    if vocab is None:
        vocab = ClassVocabulary.from_file(root / "classes.txt")
    samples = []
    for index_path in sorted((root / "index").glob("*.json")):
        doc = json.loads(index_path.read_text())
        hwc = np.asarray(Image.open(root / doc["image"]).convert("RGB"))
        image = uint8_to_image(hwc)
        class_ids = [vocab.id_of(o["class"]) for o in doc["objects"]]
        boxes = np.asarray([o["box"] for o in doc["objects"]], dtype=np.float32)
        masks = np.stack([
            np.asarray(Image.open(root / o["mask"]), dtype=np.float32) / 255.0
            for o in doc["objects"]
        ])
        masks = (masks > 0.5).astype(np.float32)
        graph, loc_vectors, keep = build_training_graph(class_ids, boxes)
        image64 = image.transpose(1, 2, 0).astype(np.float64)
        crops = np.stack([_box_crop(image64, boxes[i]).astype(np.float32) for i in keep])
        samples.append(TrainingSample(
            image=image,
            class_ids=np.asarray([class_ids[i] for i in keep], dtype=np.int64),
            boxes=boxes[np.asarray(keep)],
            masks=masks[np.asarray(keep)],
            crops=np.ascontiguousarray(crops.transpose(0, 3, 1, 2)),
            graph=graph,
            location_vectors=loc_vectors,
        ))
    return samples
