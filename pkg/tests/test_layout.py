import math

import numpy as np
import pytest
import torch

from scenegen.layout import (
    APPEARANCE_DIM,
    ObjectLayout,
    clamp_box,
    compose_counterfactual,
    compose_from_warped,
    compose_gt,
    compose_tensor,
    crop_regions,
    warp_masks,
)
from scenegen.scene_graph import SceneGraphError


# ------------------------------------------------------------------ oracles

def oracle_warp(mask, box, height, width):
    """Brute-force resampling: explicit bilinear formula per output pixel."""
    mh, mw = mask.shape
    x1, y1, x2, y2 = [float(v) for v in box]
    out = np.zeros((height, width))
    if x2 - x1 <= 1e-8 or y2 - y1 <= 1e-8:
        return out
    cols = (np.arange(width) + 0.5) / width
    rows = (np.arange(height) + 0.5) / height
    u = (cols - x1) / (x2 - x1) * mw - 0.5
    v = (rows - y1) / (y2 - y1) * mh - 0.5
    uu, vv = np.meshgrid(u, v)
    u0 = np.floor(uu).astype(int)
    v0 = np.floor(vv).astype(int)
    fu = uu - u0
    fv = vv - v0
    for du in (0, 1):
        for dv in (0, 1):
            ui = u0 + du
            vi = v0 + dv
            weight = (fu if du else 1 - fu) * (fv if dv else 1 - fv)
            valid = (ui >= 0) & (ui < mw) & (vi >= 0) & (vi < mh)
            vals = mask[np.clip(vi, 0, mh - 1), np.clip(ui, 0, mw - 1)]
            out += np.where(valid, vals * weight, 0.0)
    return out


def oracle_compose(objects, height, width, num_classes):
    """Scalar accumulation oracle: sum per-object tensor products channel by channel."""
    channels = APPEARANCE_DIM + num_classes
    out = np.zeros((channels, height, width))
    for obj in objects:
        box = clamp_box(obj.box.detach().double()).numpy()
        warped = oracle_warp(obj.mask.detach().double().numpy(), box, height, width)
        for ch in range(APPEARANCE_DIM):
            out[ch] += warped * float(obj.appearance[ch])
        out[APPEARANCE_DIM + obj.class_id] += warped
    return out


def random_scene(rng, num_classes, max_objects=8):
    n = int(rng.integers(1, max_objects + 1))
    objects = []
    for _ in range(n):
        x1, y1 = rng.uniform(0, 0.8, size=2)
        objects.append(ObjectLayout(
            class_id=int(rng.integers(0, num_classes)),
            mask=torch.from_numpy(rng.random((64, 64))).double(),
            box=torch.tensor([x1, y1, x1 + rng.uniform(0.05, 0.2 + 0.8 - x1 - 0.05),
                              y1 + rng.uniform(0.05, 0.2 + 0.8 - y1 - 0.05)],
                             dtype=torch.float64),
            appearance=torch.from_numpy(rng.normal(size=32)).double(),
        ))
    return objects


# ---------------------------------------------------------------- warp_mask

def test_identity_warp():
    out = warp_masks(torch.ones(1, 64, 64), torch.tensor([[0.0, 0.0, 1.0, 1.0]]), 64, 64)
    assert torch.equal(out, torch.ones(1, 64, 64))


def test_zero_mask_any_box():
    out = warp_masks(torch.zeros(1, 64, 64), torch.tensor([[0.1, 0.3, 0.8, 0.9]]), 64, 64)
    assert not out.any()


def test_degenerate_box_gives_zero_map():
    out = warp_masks(torch.ones(1, 64, 64), torch.tensor([[0.4, 0.2, 0.4, 0.9]]), 64, 64)
    assert not out.any()


def test_quarter_box_interior_and_border():
    box = torch.tensor([[0.25, 0.25, 0.75, 0.75]])
    out = warp_masks(torch.ones(1, 64, 64), box, 64, 64)[0]
    inside = out[17:47, 17:47]
    assert torch.allclose(inside, torch.ones_like(inside), atol=1e-4)
    # exact zero beyond a 1-pixel band around the box
    assert not out[:15, :].any() and not out[49:, :].any()
    assert not out[:, :15].any() and not out[:, 49:].any()


def test_warp_matches_oracle_random_cases():
    rng = np.random.default_rng(0)
    for _ in range(20):
        mask = rng.random((64, 64))
        x1, y1 = rng.uniform(0, 0.6, size=2)
        box = np.array([x1, y1, x1 + rng.uniform(0.1, 0.39), y1 + rng.uniform(0.1, 0.39)])
        got = warp_masks(torch.from_numpy(mask).unsqueeze(0),
                         torch.from_numpy(box).unsqueeze(0), 64, 64)[0].numpy()
        want = oracle_warp(mask, box, 64, 64)
        assert np.abs(got - want).max() < 1e-9


def test_warp_mass_preservation():
    # resampling approximately preserves mass for boxes of decent size
    rng = np.random.default_rng(1)
    height = width = 256
    for _ in range(10):
        mask = rng.random((64, 64))
        x1, y1 = rng.uniform(0, 0.5, size=2)
        w = rng.uniform(0.4, 1.0 - x1 - 1e-3)
        h = rng.uniform(0.4, 1.0 - y1 - 1e-3)
        box = torch.tensor([[x1, y1, x1 + w, y1 + h]], dtype=torch.float64)
        out = warp_masks(torch.from_numpy(mask).unsqueeze(0), box, height, width)
        expected = mask.sum() * (w * h * height * width) / (64 * 64)
        assert abs(float(out.sum()) - expected) / expected < 0.02


def test_warp_differentiable_wrt_box_and_mask():
    mask = torch.rand(1, 64, 64, requires_grad=True)
    box = torch.tensor([[0.2, 0.2, 0.7, 0.8]], requires_grad=True)
    out = warp_masks(mask, box, 64, 64)
    out.sum().backward()
    assert mask.grad is not None and float(mask.grad.abs().sum()) > 0
    assert box.grad is not None and float(box.grad.abs().sum()) > 0


# ------------------------------------------------------------ composition

def test_single_object_uniform_channels():
    appearance = torch.arange(32, dtype=torch.float64)
    obj = ObjectLayout(class_id=2, mask=torch.ones(64, 64, dtype=torch.float64),
                       box=torch.tensor([0.0, 0.0, 1.0, 1.0], dtype=torch.float64),
                       appearance=appearance)
    t = compose_tensor([obj], 64, 64, num_classes=5)
    for ch in range(32):
        assert torch.allclose(t[ch], torch.full((64, 64), float(ch), dtype=torch.float64))
    assert torch.equal(t[32 + 2], torch.ones(64, 64, dtype=torch.float64))
    for cid in (0, 1, 3, 4):
        assert not t[32 + cid].any()


def test_empty_scene_zero_tensor():
    t = compose_tensor([], 64, 64, num_classes=5)
    assert t.shape == (37, 64, 64)
    assert not t.any()


def test_class_out_of_range():
    obj = ObjectLayout(7, torch.ones(64, 64), torch.tensor([0.0, 0.0, 1.0, 1.0]),
                       torch.zeros(32))
    with pytest.raises(SceneGraphError):
        compose_tensor([obj], 64, 64, num_classes=5)


def test_disjoint_supports_match_single_compositions():
    rng = np.random.default_rng(3)
    a = ObjectLayout(0, torch.from_numpy(rng.random((64, 64))),
                     torch.tensor([0.0, 0.0, 0.45, 0.45]),
                     torch.from_numpy(rng.normal(size=32)).float())
    b = ObjectLayout(1, torch.from_numpy(rng.random((64, 64))),
                     torch.tensor([0.55, 0.55, 1.0, 1.0]),
                     torch.from_numpy(rng.normal(size=32)).float())
    both = compose_tensor([a, b], 64, 64, 5)
    only_a = compose_tensor([a], 64, 64, 5)
    only_b = compose_tensor([b], 64, 64, 5)
    assert torch.allclose(both[:, :28, :28], only_a[:, :28, :28], atol=1e-6)
    assert torch.allclose(both[:, 36:, 36:], only_b[:, 36:, 36:], atol=1e-6)


def test_overlap_sums_not_max():
    obj = ObjectLayout(1, torch.ones(64, 64), torch.tensor([0.0, 0.0, 1.0, 1.0]),
                       torch.zeros(32))
    t = compose_tensor([obj, obj], 64, 64, 5)
    assert torch.allclose(t[32 + 1], torch.full((64, 64), 2.0))


def test_compose_linear_in_object_list():
    rng = np.random.default_rng(5)
    group_a = random_scene(rng, 5, 4)
    group_b = random_scene(rng, 5, 4)
    combined = compose_tensor(group_a + group_b, 64, 64, 5)
    separate = compose_tensor(group_a, 64, 64, 5) + compose_tensor(group_b, 64, 64, 5)
    assert torch.allclose(combined, separate, atol=1e-6)


def test_compose_order_invariant():
    rng = np.random.default_rng(6)
    objects = random_scene(rng, 5, 6)
    forward = compose_tensor(objects, 64, 64, 5)
    backward = compose_tensor(list(reversed(objects)), 64, 64, 5)
    assert torch.allclose(forward, backward, atol=1e-6)


def test_compose_matches_oracle():
    rng = np.random.default_rng(7)
    for _ in range(10):
        objects = random_scene(rng, 5)
        got = compose_tensor(objects, 64, 64, 5).numpy()
        want = oracle_compose(objects, 64, 64, 5)
        assert np.abs(got - want).max() < 1e-9


def test_compose_gt_same_code_path():
    rng = np.random.default_rng(8)
    objects = random_scene(rng, 5, 3)
    assert torch.equal(compose_tensor(objects, 64, 64, 5),
                       compose_gt(objects, 64, 64, 5))


def test_gt_mask_fullframe_box_used_unchanged():
    mask = torch.from_numpy(np.random.default_rng(9).random((64, 64)))
    obj = ObjectLayout(0, mask, torch.tensor([0.0, 0.0, 1.0, 1.0], dtype=torch.float64),
                       torch.zeros(32, dtype=torch.float64))
    t = compose_gt([obj], 64, 64, 5)
    assert torch.allclose(t[32], mask, atol=1e-12)


# -------------------------------------------------------- counterfactuals

def test_counterfactual_degenerate_swap():
    rng = np.random.default_rng(10)
    objects = random_scene(rng, 5, 3)
    t_gt = compose_gt(objects, 64, 64, 5)
    t_cf = compose_counterfactual(objects, 0, objects[0].class_id,
                                  objects[0].appearance, 64, 64, 5)
    assert torch.equal(t_cf, t_gt)


def test_counterfactual_single_channel_delta():
    rng = np.random.default_rng(11)
    obj = random_scene(rng, 5, 1)[0]
    delta = 0.37
    channel = 13
    donor = obj.appearance.clone()
    donor[channel] += delta
    t_gt = compose_gt([obj], 64, 64, 5)
    t_cf = compose_counterfactual([obj], 0, obj.class_id, donor, 64, 64, 5)
    diff = (t_cf - t_gt).numpy()
    box = clamp_box(obj.box).numpy()
    expected = delta * oracle_warp(obj.mask.numpy(), box, 64, 64)
    assert np.abs(diff[channel] - expected).max() < 1e-9
    other = np.delete(diff, channel, axis=0)
    assert np.abs(other).max() < 1e-12


def test_counterfactual_class_mismatch():
    rng = np.random.default_rng(12)
    objects = random_scene(rng, 5, 2)
    wrong = (objects[0].class_id + 1) % 5
    with pytest.raises(SceneGraphError):
        compose_counterfactual(objects, 0, wrong, objects[0].appearance, 64, 64, 5)


# ------------------------------------------------------------------- crops

def test_crop_whole_image_is_resize():
    image = torch.rand(3, 64, 64)
    crop = crop_regions(image, torch.tensor([[0.0, 0.0, 1.0, 1.0]]))
    assert torch.allclose(crop[0], image, atol=1e-6)


def test_crop_constant_image_constant_crop():
    image = torch.full((3, 64, 64), 0.25)
    crop = crop_regions(image, torch.tensor([[0.3, 0.1, 0.9, 0.7]]))
    assert torch.allclose(crop, torch.full_like(crop, 0.25), atol=1e-6)


def test_crop_gradient_localized():
    image = torch.rand(3, 64, 64, requires_grad=True)
    crop = crop_regions(image, torch.tensor([[0.25, 0.25, 0.5, 0.5]]))
    crop.sum().backward()
    grad = image.grad.abs().sum(dim=0)
    assert float(grad[17:31, 17:31].sum()) > 0
    assert float(grad[40:, 40:].sum()) == 0.0


def test_dump_layout_tensor(tmp_path):
    from scenegen.layout import dump_layout_tensor

    rng = np.random.default_rng(13)
    t = compose_tensor(random_scene(rng, 5, 2), 64, 64, 5)
    dump_layout_tensor(t, tmp_path / "layout", ["a", "b", "c", "d", "e"])
    arr = np.load(tmp_path / "layout.npy")
    assert np.allclose(arr, t.numpy())
    import json
    sidecar = json.loads((tmp_path / "layout.json").read_text())
    assert sidecar["channels"][0] == "appearance_0"
    assert sidecar["channels"][32] == "class_a"
    assert len(sidecar["channels"]) == 37


def test_clamp_box_orders_coordinates():
    raw = torch.tensor([0.9, 0.2, 0.1, 0.8])
    assert torch.allclose(clamp_box(raw), torch.tensor([0.1, 0.2, 0.9, 0.8]))
    wild = torch.tensor([-0.5, 1.7, 0.3, -0.2])
    clamped = clamp_box(wild)
    assert clamped.min() >= 0 and clamped.max() <= 1
    assert clamped[0] <= clamped[2] and clamped[1] <= clamped[3]
