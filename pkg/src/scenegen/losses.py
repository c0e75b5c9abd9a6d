"""Training loss terms and their weighted combination.

All adversarial terms use least-squares targets: real scores are pushed to
1, fake scores to 0, and the generator-side terms push their scores to 1
(except the counterfactual-appearance pair, which everyone agrees should
score 0). There is intentionally no direct mask reconstruction loss; masks
carry a stochastic input, so their supervision comes entirely from the mask
adversary and its feature matching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import torch
import torch.nn as nn


class TrainingFault(RuntimeError):
    """A loss term went non-finite; the message names the offending term."""


@dataclass
class LossWeights:
    box: float = 10.0
    perceptual: float = 10.0
    gan_mask: float = 1.0
    gan_image: float = 1.0
    gan_object: float = 0.1
    fm_mask: float = 10.0
    fm_image: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be nonnegative")


def loss_reconstruction(image, target):
    if image.shape != target.shape:
        raise ValueError("image shapes differ")
    return (image - target).abs().mean()


def loss_box(boxes, gt_boxes):
    """Per-object mean squared coordinate error, summed over objects."""
    if boxes.shape != gt_boxes.shape:
        raise ValueError("box counts differ")
    if boxes.numel() == 0:
        return boxes.sum()
    return ((boxes - gt_boxes) ** 2).mean(dim=-1).sum()


class PerceptualExtractor(nn.Module):
    """Small frozen conv feature pyramid used for the perceptual loss.

    Three stages, each ending in a stride-2 conv; the loss reads the three
    post-downsampling activations. Weights are generated from a fixed seed
    so the extractor ships with the repo and never trains.
    """

    WEIGHT_SEED = 0x5CE9E

    def __init__(self):
        super().__init__()
        stages = []
        prev = 3
        for ch in (16, 32, 64):
            stages.append(nn.Sequential(
                nn.Conv2d(prev, ch, kernel_size=3, padding=1),
                nn.ReLU(inplace=True),
                nn.Conv2d(ch, ch, kernel_size=3, stride=2, padding=1),
                nn.ReLU(inplace=True),
            ))
            prev = ch
        self.stages = nn.ModuleList(stages)
        gen = torch.Generator().manual_seed(self.WEIGHT_SEED)
        for p in self.parameters():
            fan_in = p.shape[1] * p.shape[2] * p.shape[3] if p.dim() == 4 else p.shape[0]
            p.data = torch.randn(p.shape, generator=gen) * math.sqrt(2.0 / fan_in)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def train(self, mode=True):  # stays frozen even inside a training module
        return super().train(False)

    def forward(self, images):
        feats = []
        x = images
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


def loss_perceptual(image, target, extractor):
    """Sum over extractor layers of the element-count-normalized L1 gap."""
    if image.shape != target.shape:
        raise ValueError("image shapes differ")
    total = image.new_zeros(())
    with torch.no_grad():
        target_feats = extractor(target)
    for feat, ref in zip(extractor(image), target_feats):
        total = total + (feat - ref).abs().mean()
    return total


def lsgan_real(score):
    return ((score - 1.0) ** 2).mean()


def lsgan_fake(score):
    return (score ** 2).mean()


def loss_gan_mask(real_masks, fake_masks, class_ids, disc):
    """(generator term, discriminator term) for the class-conditioned mask GAN."""
    real_score, _ = disc(real_masks, class_ids)
    fake_score, _ = disc(fake_masks, class_ids)
    disc_term = lsgan_real(real_score) + lsgan_fake(fake_score)
    gen_term = lsgan_real(fake_score)
    return gen_term, disc_term


def _image_pairs_scores(disc, layout_tensor, image):
    return [score for score, _ in disc(layout_tensor, image)]


def loss_gan_image(layout, gt_layout, cf_layout, image, gt_image, disc):
    """Compound layout+image GAN over four pairs, summed across both scales.

    The discriminator sees (gt_layout, gt_image) as real and the three
    mixed pairs as fake. The generator side pushes (gt_layout, image) and
    (layout, gt_image) toward real, and keeps the counterfactual pair
    (cf_layout, gt_image) firmly fake.
    """
    gen_term = image.new_zeros(())
    disc_term = image.new_zeros(())
    for real_s in _image_pairs_scores(disc, gt_layout, gt_image):
        disc_term = disc_term + lsgan_real(real_s)
    for fake in ((gt_layout, image), (layout, gt_image), (cf_layout, gt_image)):
        for s in _image_pairs_scores(disc, *fake):
            disc_term = disc_term + lsgan_fake(s)
    for fooled in ((gt_layout, image), (layout, gt_image)):
        for s in _image_pairs_scores(disc, *fooled):
            gen_term = gen_term + lsgan_real(s)
    for s in _image_pairs_scores(disc, cf_layout, gt_image):
        gen_term = gen_term + lsgan_fake(s)
    return gen_term, disc_term


def loss_gan_object(fake_crops, real_crops, disc):
    """Per-object LS terms, summed over the objects of the batch."""
    if fake_crops.shape[0] == 0:
        zero = fake_crops.sum()
        return zero, zero.clone()
    real_score, _ = disc(real_crops)
    fake_score, _ = disc(fake_crops)
    disc_term = ((real_score - 1.0) ** 2 + fake_score ** 2).sum()
    gen_term = ((fake_score - 1.0) ** 2).sum()
    return gen_term, disc_term


def loss_feature_matching(real_features, fake_features):
    """Sum over layers of the mean absolute activation gap; targets detach."""
    if len(real_features) != len(fake_features):
        raise ValueError("feature lists differ in length")
    total = None
    for real, fake in zip(real_features, fake_features):
        if real.shape != fake.shape:
            raise ValueError("feature shapes differ")
        term = (fake - real.detach()).abs().mean()
        total = term if total is None else total + term
    if total is None:
        raise ValueError("empty feature lists")
    return total


TERM_ORDER = (
    "reconstruction",
    "box",
    "perceptual",
    "gan_mask",
    "gan_image",
    "gan_object",
    "fm_mask",
    "fm_image",
)


def total_generator_loss(terms: dict, weights: LossWeights):
    """Weighted sum of the eight generator-side terms.

    terms maps each TERM_ORDER name to a scalar tensor (generator-side GAN
    terms, not the discriminator-maximized ones).
    """
    missing = [t for t in TERM_ORDER if t not in terms]
    if missing:
        raise ValueError(f"missing loss terms: {missing}")
    scale = {
        "reconstruction": 1.0,
        "box": weights.box,
        "perceptual": weights.perceptual,
        "gan_mask": weights.gan_mask,
        "gan_image": weights.gan_image,
        "gan_object": weights.gan_object,
        "fm_mask": weights.fm_mask,
        "fm_image": weights.fm_image,
    }
    total = None
    for name in TERM_ORDER:
        value = terms[name]
        if not torch.isfinite(value):
            raise TrainingFault(f"non-finite loss term: {name}")
        piece = scale[name] * value
        total = piece if total is None else total + piece
    return total
