"""Compose per-object masks, classes and appearance vectors into layout tensors.

The multiplexer is fixed (no learned parameters) but fully differentiable:
gradients flow through the warped masks back into the mask and box networks.
Channel order of a layout tensor is appearance features first, class one-hot
second, so a tensor has ``appearance_dim + num_classes`` channels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import torch

from .scene_graph import SceneGraphError

APPEARANCE_DIM = 32
MASK_SIZE = 64


def clamp_box(box: torch.Tensor) -> torch.Tensor:
    """Clamp coordinates to [0,1] and order corners (x1<=x2, y1<=y2)."""
    b = box.clamp(0.0, 1.0)
    x1 = torch.minimum(b[..., 0], b[..., 2])
    x2 = torch.maximum(b[..., 0], b[..., 2])
    y1 = torch.minimum(b[..., 1], b[..., 3])
    y2 = torch.maximum(b[..., 1], b[..., 3])
    return torch.stack([x1, y1, x2, y2], dim=-1)


def _bilinear_gather(src: torch.Tensor, u: torch.Tensor, v: torch.Tensor,
                     zero_outside: bool) -> torch.Tensor:
    """Sample src[n, c, H, W] at pixel coordinates (u, v) of shape [n, h, w].

    Coordinates are in source pixel units (0 is the center of the first
    pixel). With zero_outside, samples beyond the border fade to zero;
    otherwise the border value is replicated.
    """
    n, c, sh, sw = src.shape
    u0 = u.floor()
    v0 = v.floor()
    fu = u - u0
    fv = v - v0
    u0 = u0.long()
    v0 = v0.long()

    out = None
    for du, dv, w in (
        (0, 0, (1 - fu) * (1 - fv)),
        (1, 0, fu * (1 - fv)),
        (0, 1, (1 - fu) * fv),
        (1, 1, fu * fv),
    ):
        ui = u0 + du
        vi = v0 + dv
        if zero_outside:
            valid = (ui >= 0) & (ui < sw) & (vi >= 0) & (vi < sh)
            w = w * valid.to(w.dtype)
        ui = ui.clamp(0, sw - 1)
        vi = vi.clamp(0, sh - 1)
        flat = (vi * sw + ui).reshape(n, 1, -1).expand(n, c, -1)
        vals = src.reshape(n, c, -1).gather(2, flat).reshape(n, c, *u.shape[1:])
        term = vals * w.unsqueeze(1)
        out = term if out is None else out + term
    return out


def warp_masks(masks: torch.Tensor, boxes: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """Shift and scale box-local masks into an image-frame map of zeros outside.

    masks: [n, mh, mw] in [0,1]; boxes: [n, 4] clamped/ordered ratios.
    Returns [n, height, width]. Degenerate boxes produce all-zero maps.
    Differentiable with respect to both masks and boxes.
    """
    if masks.dim() != 3:
        raise SceneGraphError(f"expected [n, h, w] masks, got {tuple(masks.shape)}")
    n, mh, mw = masks.shape
    if boxes.shape != (n, 4):
        raise SceneGraphError(f"expected [{n}, 4] boxes, got {tuple(boxes.shape)}")
    dtype = masks.dtype
    device = masks.device
    if n == 0:
        return torch.zeros(0, height, width, dtype=dtype, device=device)

    x1, y1, x2, y2 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    bw = x2 - x1
    bh = y2 - y1
    eps = 1e-8
    alive = ((bw > eps) & (bh > eps)).to(dtype)
    bw = bw.clamp_min(eps)
    bh = bh.clamp_min(eps)

    px = (torch.arange(width, dtype=dtype, device=device) + 0.5) / width
    py = (torch.arange(height, dtype=dtype, device=device) + 0.5) / height
    # source coordinates in mask pixel units; pixels outside the box land
    # outside [0, m-1] and fade to zero through the sampler
    u = (px.view(1, 1, width) - x1.view(n, 1, 1)) / bw.view(n, 1, 1) * mw - 0.5
    v = (py.view(1, height, 1) - y1.view(n, 1, 1)) / bh.view(n, 1, 1) * mh - 0.5
    u = u.expand(n, height, width)
    v = v.expand(n, height, width)

    warped = _bilinear_gather(masks.unsqueeze(1), u, v, zero_outside=True)
    return warped.squeeze(1) * alive.view(n, 1, 1)


def crop_regions(image: torch.Tensor, boxes: torch.Tensor, size: int = MASK_SIZE) -> torch.Tensor:
    """Differentiable crop-and-resize of box regions to size x size.

    image: [c, H, W] or [n, c, H, W] (one image per box when batched).
    Border pixels are replicated so constant images give constant crops;
    degenerate boxes give zero crops.
    """
    single = image.dim() == 3
    if single:
        image = image.unsqueeze(0).expand(boxes.shape[0], *image.shape)
    n, c, h, w = image.shape
    if boxes.shape != (n, 4):
        raise SceneGraphError(f"expected [{n}, 4] boxes, got {tuple(boxes.shape)}")
    dtype = image.dtype
    device = image.device
    if n == 0:
        return torch.zeros(0, c, size, size, dtype=dtype, device=device)

    x1, y1, x2, y2 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    bw = x2 - x1
    bh = y2 - y1
    eps = 1e-8
    alive = ((bw > eps) & (bh > eps)).to(dtype)

    grid = (torch.arange(size, dtype=dtype, device=device) + 0.5) / size
    u = (x1.view(n, 1, 1) + grid.view(1, 1, size) * bw.view(n, 1, 1)) * w - 0.5
    v = (y1.view(n, 1, 1) + grid.view(1, size, 1) * bh.view(n, 1, 1)) * h - 0.5
    u = u.expand(n, size, size)
    v = v.expand(n, size, size)

    crops = _bilinear_gather(image, u, v, zero_outside=False)
    return crops * alive.view(n, 1, 1, 1)


def compose_from_warped(
    class_ids: torch.Tensor,
    warped_masks: torch.Tensor,
    appearances: torch.Tensor,
    num_classes: int,
    scene_index: Optional[torch.Tensor] = None,
    num_scenes: int = 1,
) -> torch.Tensor:
    """Sum per-object tensors mask (x) [appearance, class one-hot].

    Returns [num_scenes, appearance_dim + num_classes, H, W]. When
    scene_index is omitted all objects belong to one scene.
    """
    n, h, w = warped_masks.shape
    dtype = warped_masks.dtype
    device = warped_masks.device
    if appearances.shape != (n, APPEARANCE_DIM):
        raise SceneGraphError(
            f"expected [{n}, {APPEARANCE_DIM}] appearances, got {tuple(appearances.shape)}"
        )
    if n and (class_ids.min() < 0 or class_ids.max() >= num_classes):
        raise SceneGraphError("class id out of range")

    channels = APPEARANCE_DIM + num_classes
    out = torch.zeros(num_scenes, channels, h, w, dtype=dtype, device=device)
    if n == 0:
        return out
    onehot = torch.zeros(n, num_classes, dtype=dtype, device=device)
    onehot[torch.arange(n), class_ids] = 1.0
    feats = torch.cat([appearances, onehot], dim=1)
    per_object = feats.unsqueeze(-1).unsqueeze(-1) * warped_masks.unsqueeze(1)
    if scene_index is None:
        scene_index = torch.zeros(n, dtype=torch.long, device=device)
    out.index_add_(0, scene_index, per_object)
    return out


@dataclass
class ObjectLayout:
    """Geometry and appearance of one object ready for composition."""

    class_id: int
    mask: torch.Tensor  # [mh, mw], box-local, values in [0,1]
    box: torch.Tensor  # [4] ratios, clamped/ordered before use
    appearance: torch.Tensor  # [APPEARANCE_DIM]


def compose_tensor(objects: Sequence[ObjectLayout], height: int, width: int,
                   num_classes: int) -> torch.Tensor:
    """Layout tensor [appearance_dim + num_classes, H, W] for one scene."""
    if not objects:
        return torch.zeros(APPEARANCE_DIM + num_classes, height, width)
    masks = torch.stack([o.mask for o in objects])
    boxes = clamp_box(torch.stack([o.box for o in objects]).to(masks.dtype))
    apps = torch.stack([o.appearance for o in objects]).to(masks.dtype)
    ids = torch.tensor([o.class_id for o in objects], dtype=torch.long)
    warped = warp_masks(masks, boxes, height, width)
    return compose_from_warped(ids, warped, apps, num_classes)[0]


def compose_gt(objects: Sequence[ObjectLayout], height: int, width: int,
               num_classes: int) -> torch.Tensor:
    """Composition with ground-truth geometry; same code path as compose_tensor."""
    return compose_tensor(objects, height, width, num_classes)


def dump_layout_tensor(tensor: torch.Tensor, path, class_names: Sequence[str]) -> None:
    """Debug dump: the raw array plus a JSON sidecar naming every channel."""
    tensor = tensor.detach().cpu()
    if tensor.dim() != 3:
        raise SceneGraphError("expected an unbatched [channels, H, W] tensor")
    channels = [f"appearance_{i}" for i in range(APPEARANCE_DIM)]
    channels += [f"class_{name}" for name in class_names]
    if tensor.shape[0] != len(channels):
        raise SceneGraphError(
            f"tensor has {tensor.shape[0]} channels, expected {len(channels)}")
    path = Path(path)
    np.save(path.with_suffix(".npy"), tensor.numpy())
    sidecar = {
        "shape": list(tensor.shape),
        "layout": "channels_first",
        "channels": channels,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))


def compose_counterfactual(objects: Sequence[ObjectLayout], swap_index: int,
                           donor_class_id: int, donor_appearance: torch.Tensor,
                           height: int, width: int, num_classes: int) -> torch.Tensor:
    """Ground-truth composition with one object's appearance swapped for a donor."""
    if not 0 <= swap_index < len(objects):
        raise SceneGraphError(f"swap index {swap_index} out of range")
    target = objects[swap_index]
    if donor_class_id != target.class_id:
        raise SceneGraphError(
            f"donor class {donor_class_id} does not match object class {target.class_id}"
        )
    swapped = list(objects)
    swapped[swap_index] = ObjectLayout(
        class_id=target.class_id,
        mask=target.mask,
        box=target.box,
        appearance=donor_appearance,
    )
    return compose_gt(swapped, height, width, num_classes)
