"""Alternating adversarial training over packed scene batches, plus checkpoints.

Each step: (1) independently zero every sample's location vectors with
probability one half, (2) run the full object pipeline to get masks, boxes,
appearances and the three layout tensors, (3) update the discriminators on
their least-squares objectives, (4) update the generator-side networks and
both embedding tables on the weighted total loss.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from .data import TrainingSample
from .layout import clamp_box, compose_from_warped, warp_masks
from .losses import (
    LossWeights,
    PerceptualExtractor,
    TrainingFault,
    loss_box,
    loss_feature_matching,
    loss_perceptual,
    loss_reconstruction,
    lsgan_fake,
    lsgan_real,
    total_generator_loss,
)
from .nets import (
    APPEARANCE_DIM,
    EMBED_DIM,
    MASK_SIZE,
    NOISE_DIM,
    AppearanceEncoder,
    BoxPredictor,
    ImageRenderer,
    LayoutGraphNet,
    MaskDiscriminator,
    MaskGenerator,
    MultiScaleLayoutImageDiscriminator,
    ObjectPatchDiscriminator,
    crop_objects,
)
from .scene_graph import RELATION_TYPES, ClassVocabulary

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
BATCH_BY_RESOLUTION = {64: 32, 128: 16, 256: 4}


class CheckpointError(RuntimeError):
    """Checkpoint manifest does not match the requested configuration."""


@dataclass
class TrainConfig:
    resolution: int = 64
    batch_size: int = 0  # 0 means the per-resolution default
    iterations: int = 1000
    seed: int = 0
    learning_rate: float = 1e-4
    disc_learning_rate: float = 1e-4
    mask_disc_learning_rate: float = 1e-5
    adam_beta1: float = 0.5
    location_zero_prob: float = 0.5
    grad_clip_norm: float = 0.0  # 0 disables clipping
    width: float = 1.0
    num_res_blocks: int = 9
    log_every: int = 25

    def __post_init__(self):
        if self.resolution not in BATCH_BY_RESOLUTION:
            raise ValueError(f"unsupported resolution: {self.resolution}")
        if self.batch_size == 0:
            self.batch_size = BATCH_BY_RESOLUTION[self.resolution]

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        """Flat key/value text format: one `name = value` per line."""
        values = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for raw in Path(path).read_text().splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in types:
                raise ValueError(f"unknown config key: {key}")
            caster = float if "float" in str(types[key]) else int
            values[key] = caster(value.strip())
        return cls(**values)

    def to_file(self, path) -> None:
        lines = [f"{f.name} = {getattr(self, f.name)}" for f in dataclasses.fields(self)]
        Path(path).write_text("\n".join(lines) + "\n")


def sample_location_zero_mask(n: int, prob: float, rng: np.random.Generator) -> np.ndarray:
    """Per-sample booleans marking scenes whose location vectors get zeroed."""
    return rng.random(n) < prob


@dataclass
class Batch:
    """Scene batch packed into flat per-object tensors."""

    images: torch.Tensor  # [B, 3, H, W]
    class_ids: torch.Tensor  # [N]
    location_vecs: torch.Tensor  # [N, 35], already zeroed where drawn
    gt_boxes: torch.Tensor  # [N, 4]
    gt_masks: torch.Tensor  # [N, 64, 64]
    gt_crops: torch.Tensor  # [N, 3, 64, 64]
    scene_index: torch.Tensor  # [N]
    edge_index: torch.Tensor  # [M, 2] node positions
    edge_types: torch.Tensor  # [M]

    @property
    def num_scenes(self) -> int:
        return self.images.shape[0]


def collate(samples: Sequence[TrainingSample], zero_locations: np.ndarray,
            device="cpu") -> Batch:
    images, class_ids, loc_vecs, boxes, masks, crops, scene_index = [], [], [], [], [], [], []
    edge_index, edge_types = [], []
    offset = 0
    rel_index = {name: i for i, name in enumerate(RELATION_TYPES)}
    for s_idx, sample in enumerate(samples):
        images.append(torch.from_numpy(sample.image))
        class_ids.append(torch.from_numpy(sample.class_ids))
        loc = sample.location_vectors
        if zero_locations[s_idx]:
            loc = np.zeros_like(loc)
        loc_vecs.append(torch.from_numpy(loc.copy()))
        boxes.append(torch.from_numpy(sample.boxes))
        masks.append(torch.from_numpy(sample.masks))
        crops.append(torch.from_numpy(sample.crops))
        scene_index.append(torch.full((sample.num_objects,), s_idx, dtype=torch.long))
        pos_of = {o.id: k for k, o in enumerate(sample.graph.objects)}
        for rel in sample.graph.relations:
            edge_index.append((offset + pos_of[rel.subject], offset + pos_of[rel.object]))
            edge_types.append(rel_index[rel.predicate])
        offset += sample.num_objects
    return Batch(
        images=torch.stack(images).to(device),
        class_ids=torch.cat(class_ids).to(device),
        location_vecs=torch.cat(loc_vecs).to(device),
        gt_boxes=torch.cat(boxes).to(device),
        gt_masks=torch.cat(masks).to(device),
        gt_crops=torch.cat(crops).to(device),
        scene_index=torch.cat(scene_index).to(device),
        edge_index=torch.tensor(edge_index, dtype=torch.long, device=device).reshape(-1, 2),
        edge_types=torch.tensor(edge_types, dtype=torch.long, device=device),
    )


class GeneratorNets(torch.nn.Module):
    """The five generator-side networks plus both embedding tables."""

    def __init__(self, num_classes, width=1.0, num_res_blocks=9):
        super().__init__()
        self.graph_net = LayoutGraphNet(num_classes, width)
        self.mask_net = MaskGenerator(width)
        self.box_net = BoxPredictor(width)
        self.appearance_net = AppearanceEncoder(width)
        self.renderer = ImageRenderer(num_classes, width, num_res_blocks)
        self.num_classes = num_classes


class DiscriminatorNets(torch.nn.Module):
    def __init__(self, num_classes, width=1.0):
        super().__init__()
        self.mask = MaskDiscriminator(num_classes, width)
        self.image = MultiScaleLayoutImageDiscriminator(num_classes, width)
        self.object = ObjectPatchDiscriminator(width)


def pick_counterfactual_donors(class_ids: np.ndarray, scene_index: np.ndarray,
                               rng: np.random.Generator):
    """One (target, donor) appearance swap per scene, donors share the class.

    The donor is a different object (usually from another scene); scenes
    whose sampled target has no same-class peer keep their own appearance.
    """
    swaps = []
    for scene in np.unique(scene_index):
        members = np.flatnonzero(scene_index == scene)
        target = int(rng.choice(members))
        peers = np.flatnonzero((class_ids == class_ids[target]))
        peers = peers[peers != target]
        if len(peers):
            swaps.append((target, int(rng.choice(peers))))
    return swaps


class Trainer:
    def __init__(self, config: TrainConfig, vocab: ClassVocabulary,
                 dataset: Sequence[TrainingSample], device="cpu"):
        self.config = config
        self.vocab = vocab
        self.dataset = list(dataset)
        self.device = device
        self.weights = LossWeights()

        torch.manual_seed(config.seed)
        self.nets = GeneratorNets(len(vocab), config.width, config.num_res_blocks).to(device)
        self.discs = DiscriminatorNets(len(vocab), config.width).to(device)
        self.perceptual = PerceptualExtractor().to(device)

        betas = (config.adam_beta1, 0.999)
        self.opt_gen = torch.optim.Adam(self.nets.parameters(),
                                        lr=config.learning_rate, betas=betas)
        self.opt_disc = torch.optim.Adam(
            list(self.discs.image.parameters()) + list(self.discs.object.parameters()),
            lr=config.disc_learning_rate, betas=betas)
        self.opt_mask_disc = torch.optim.Adam(self.discs.mask.parameters(),
                                              lr=config.mask_disc_learning_rate, betas=betas)

        self.torch_rng = torch.Generator(device="cpu").manual_seed(config.seed)
        self.np_rng = np.random.default_rng(config.seed)
        self.step_count = 0

    def sample_batch(self) -> Batch:
        idx = self.np_rng.integers(0, len(self.dataset), size=self.config.batch_size)
        zero = sample_location_zero_mask(len(idx), self.config.location_zero_prob, self.np_rng)
        return collate([self.dataset[i] for i in idx], zero, self.device)

    def forward_generator(self, batch: Batch):
        """Run the object pipeline and compose all three layout tensors."""
        n = batch.class_ids.shape[0]
        h = w = self.config.resolution
        layout_vecs = self.nets.graph_net(
            batch.class_ids, batch.location_vecs, batch.edge_index, batch.edge_types)
        noise = torch.randn(n, NOISE_DIM, generator=self.torch_rng).to(self.device)
        masks = self.nets.mask_net(layout_vecs, noise)
        raw_boxes = self.nets.box_net(layout_vecs)
        boxes = clamp_box(raw_boxes)
        appearance = self.nets.appearance_net(batch.gt_crops)

        warped_pred = warp_masks(masks, boxes, h, w)
        warped_gt = warp_masks(batch.gt_masks, batch.gt_boxes, h, w)
        num_classes = self.nets.num_classes
        scene_idx = batch.scene_index
        b = batch.num_scenes
        layout = compose_from_warped(batch.class_ids, warped_pred, appearance,
                                     num_classes, scene_idx, b)
        gt_layout = compose_from_warped(batch.class_ids, warped_gt, appearance,
                                        num_classes, scene_idx, b)
        cf_appearance = appearance.clone()
        swaps = pick_counterfactual_donors(batch.class_ids.cpu().numpy(),
                                           scene_idx.cpu().numpy(), self.np_rng)
        for target, donor in swaps:
            cf_appearance[target] = appearance[donor]
        cf_layout = compose_from_warped(batch.class_ids, warped_gt, cf_appearance,
                                        num_classes, scene_idx, b)
        image = self.nets.renderer(layout)
        fake_crops = crop_objects(image[scene_idx], boxes)
        return {
            "layout_vecs": layout_vecs,
            "masks": masks,
            "raw_boxes": raw_boxes,
            "boxes": boxes,
            "appearance": appearance,
            "layout": layout,
            "gt_layout": gt_layout,
            "cf_layout": cf_layout,
            "image": image,
            "fake_crops": fake_crops,
        }

    def _image_disc_scores(self, layout, image):
        return [score for score, _ in self.discs.image(layout, image)]

    def train_step(self, batch: Optional[Batch] = None) -> Dict[str, float]:
        if batch is None:
            batch = self.sample_batch()
        self.nets.train()
        self.discs.train()
        out = self.forward_generator(batch)

        # discriminators first, on detached generator outputs
        layout_d = out["layout"].detach()
        gt_layout_d = out["gt_layout"].detach()
        cf_layout_d = out["cf_layout"].detach()
        image_d = out["image"].detach()
        masks_d = out["masks"].detach()
        crops_d = out["fake_crops"].detach()

        real_mask_score, _ = self.discs.mask(batch.gt_masks, batch.class_ids)
        fake_mask_score, _ = self.discs.mask(masks_d, batch.class_ids)
        d_mask_loss = lsgan_real(real_mask_score) + lsgan_fake(fake_mask_score)

        d_image_loss = batch.images.new_zeros(())
        for s in self._image_disc_scores(gt_layout_d, batch.images):
            d_image_loss = d_image_loss + lsgan_real(s)
        for pair in ((gt_layout_d, image_d), (layout_d, batch.images),
                     (cf_layout_d, batch.images)):
            for s in self._image_disc_scores(*pair):
                d_image_loss = d_image_loss + lsgan_fake(s)

        # per-crop mean keeps the update scale independent of object count;
        # the generator-side term below stays the summed objective
        real_obj_score, _ = self.discs.object(batch.gt_crops)
        fake_obj_score, _ = self.discs.object(crops_d)
        d_object_loss = ((real_obj_score - 1.0) ** 2 + fake_obj_score ** 2).mean()

        self.opt_disc.zero_grad(set_to_none=True)
        self.opt_mask_disc.zero_grad(set_to_none=True)
        (d_image_loss + d_object_loss).backward()
        d_mask_loss.backward()
        self.opt_disc.step()
        self.opt_mask_disc.step()

        # generator side against the updated discriminators
        terms = {}
        terms["reconstruction"] = loss_reconstruction(out["image"], batch.images)
        terms["box"] = loss_box(out["raw_boxes"], batch.gt_boxes)
        terms["perceptual"] = loss_perceptual(out["image"], batch.images, self.perceptual)

        with torch.no_grad():
            _, real_mask_feats = self.discs.mask(batch.gt_masks, batch.class_ids)
        gen_mask_score, fake_mask_feats = self.discs.mask(out["masks"], batch.class_ids)
        terms["gan_mask"] = lsgan_real(gen_mask_score)
        terms["fm_mask"] = loss_feature_matching(real_mask_feats, fake_mask_feats)

        gan_image = batch.images.new_zeros(())
        for pair in ((out["gt_layout"], out["image"]), (out["layout"], batch.images)):
            for s in self._image_disc_scores(*pair):
                gan_image = gan_image + lsgan_real(s)
        for s in self._image_disc_scores(out["cf_layout"], batch.images):
            gan_image = gan_image + lsgan_fake(s)
        terms["gan_image"] = gan_image

        with torch.no_grad():
            real_image_outs = self.discs.image(out["gt_layout"].detach(), batch.images)
        fake_image_outs = self.discs.image(out["layout"], out["image"])
        fm_image = batch.images.new_zeros(())
        for (_, real_feats), (_, fake_feats) in zip(real_image_outs, fake_image_outs):
            fm_image = fm_image + loss_feature_matching(real_feats, fake_feats)
        terms["fm_image"] = fm_image

        gen_obj_score, _ = self.discs.object(out["fake_crops"])
        terms["gan_object"] = ((gen_obj_score - 1.0) ** 2).sum()

        total = total_generator_loss(terms, self.weights)
        self.opt_gen.zero_grad(set_to_none=True)
        total.backward()
        if self.config.grad_clip_norm > 0:
            torch.nn.utils.clip_grad_norm_(self.nets.parameters(),
                                           self.config.grad_clip_norm)
        self.opt_gen.step()

        self.step_count += 1
        report = {name: float(value.detach()) for name, value in terms.items()}
        report["total"] = float(total.detach())
        report["disc_mask"] = float(d_mask_loss.detach())
        report["disc_image"] = float(d_image_loss.detach())
        report["disc_object"] = float(d_object_loss.detach())
        for name, value in report.items():
            if not np.isfinite(value):
                raise TrainingFault(f"non-finite loss term: {name}")
        return report

    def train(self, out_dir=None, iterations: Optional[int] = None,
              log_stream=None) -> List[Dict[str, float]]:
        """Run the loop, streaming {step, term_name, value} records as NDJSON."""
        iterations = iterations if iterations is not None else self.config.iterations
        out_dir = Path(out_dir) if out_dir is not None else None
        metrics_file = None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            metrics_file = (out_dir / "metrics.ndjson").open("a")
        history = []
        started = time.time()
        try:
            for _ in range(iterations):
                report = self.train_step()
                history.append(report)
                for sink in (metrics_file, log_stream):
                    if sink is not None:
                        for term, value in report.items():
                            sink.write(json.dumps({
                                "step": self.step_count, "term_name": term, "value": value,
                            }) + "\n")
                        sink.flush()
                if self.step_count % self.config.log_every == 0:
                    logger.info("step %d total %.4f rec %.4f (%.1fs)",
                                self.step_count, report["total"],
                                report["reconstruction"], time.time() - started)
            if out_dir is not None:
                save_checkpoint(out_dir / "checkpoint.pt", self)
        finally:
            if metrics_file is not None:
                metrics_file.close()
        return history


def _manifest(trainer: Trainer, include_discriminators: bool) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "num_classes": len(trainer.vocab),
        "vocab_hash": trainer.vocab.content_hash(),
        "class_names": trainer.vocab.names,
        "resolution": trainer.config.resolution,
        "width": trainer.config.width,
        "num_res_blocks": trainer.config.num_res_blocks,
        "dims": {
            "embed": EMBED_DIM,
            "grid_cells": 25,
            "size_bins": 10,
            "noise": NOISE_DIM,
            "appearance": APPEARANCE_DIM,
            "mask_size": MASK_SIZE,
        },
        "include_discriminators": include_discriminators,
    }


def save_checkpoint(path, trainer: Trainer, include_discriminators: bool = True) -> None:
    payload = {
        "manifest": _manifest(trainer, include_discriminators),
        "config": dataclasses.asdict(trainer.config),
        "nets": trainer.nets.state_dict(),
        "step": trainer.step_count,
    }
    if include_discriminators:
        payload["discriminators"] = trainer.discs.state_dict()
        payload["optimizers"] = {
            "gen": trainer.opt_gen.state_dict(),
            "disc": trainer.opt_disc.state_dict(),
            "mask_disc": trainer.opt_mask_disc.state_dict(),
        }
        payload["rng"] = {
            "torch": trainer.torch_rng.get_state(),
            "numpy": trainer.np_rng.bit_generator.state,
        }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def check_manifest(manifest: dict, vocab: ClassVocabulary) -> None:
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version: {manifest.get('version')}")
    if manifest["num_classes"] != len(vocab) or manifest["vocab_hash"] != vocab.content_hash():
        raise CheckpointError("class vocabulary does not match the checkpoint")
    dims = manifest["dims"]
    expected = {"embed": EMBED_DIM, "grid_cells": 25, "size_bins": 10,
                "noise": NOISE_DIM, "appearance": APPEARANCE_DIM,
                "mask_size": MASK_SIZE}
    if dims != expected:
        raise CheckpointError(f"dimension mismatch: {dims} != {expected}")


def load_checkpoint(path, trainer: Trainer) -> None:
    """Restore a trainer for seamless resume; manifest must match exactly."""
    payload = torch.load(path, map_location=trainer.device, weights_only=False)
    check_manifest(payload["manifest"], trainer.vocab)
    if payload["manifest"]["resolution"] != trainer.config.resolution:
        raise CheckpointError("resolution mismatch")
    trainer.nets.load_state_dict(payload["nets"])
    if "discriminators" not in payload:
        raise CheckpointError("checkpoint has no discriminators; cannot resume training")
    trainer.discs.load_state_dict(payload["discriminators"])
    trainer.opt_gen.load_state_dict(payload["optimizers"]["gen"])
    trainer.opt_disc.load_state_dict(payload["optimizers"]["disc"])
    trainer.opt_mask_disc.load_state_dict(payload["optimizers"]["mask_disc"])
    trainer.torch_rng.set_state(payload["rng"]["torch"])
    trainer.np_rng.bit_generator.state = payload["rng"]["numpy"]
    trainer.step_count = payload["step"]


def load_generator(path, vocab: Optional[ClassVocabulary] = None, device="cpu"):
    """Load the inference nets from a checkpoint; returns (nets, manifest)."""
    payload = torch.load(path, map_location=device, weights_only=False)
    manifest = payload["manifest"]
    if vocab is None:
        vocab = ClassVocabulary(manifest["class_names"])
    check_manifest(manifest, vocab)
    nets = GeneratorNets(manifest["num_classes"], manifest["width"],
                         manifest["num_res_blocks"])
    nets.load_state_dict(payload["nets"])
    nets.to(device).eval()
    return nets, manifest
