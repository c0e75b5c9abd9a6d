"""Evaluation suite: inception score, Fréchet distance, diversity, box quality.

Backbones are pluggable: anything producing class probabilities works for
the inception score, anything producing feature vectors works for the
Fréchet distance, and the bundled frozen conv pyramid gives an offline
perceptual distance for the diversity score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from .losses import PerceptualExtractor

EIGENVALUE_FLOOR = 1e-10


def inception_score(probs: np.ndarray, splits: int = 10) -> Tuple[float, float]:
    """exp(mean KL(row || split marginal)), mean and std over the splits."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError("expected a matrix of probability rows")
    if (probs < 0).any() or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("rows must be probability vectors")
    scores = []
    for chunk in np.array_split(probs, splits):
        if len(chunk) == 0:
            continue
        marginal = chunk.mean(axis=0, keepdims=True)
        safe = np.clip(chunk, 1e-12, None)
        kl = (chunk * (np.log(safe) - np.log(np.clip(marginal, 1e-12, None)))).sum(axis=1)
        scores.append(np.exp(kl.mean()))
    return float(np.mean(scores)), float(np.std(scores))


@dataclass
class FeatureStats:
    mean: np.ndarray
    cov: np.ndarray
    count: int

    @classmethod
    def from_features(cls, features: np.ndarray) -> "FeatureStats":
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or len(features) < 2:
            raise ValueError("need at least two feature rows")
        return cls(mean=features.mean(axis=0),
                   cov=np.cov(features, rowvar=False),
                   count=len(features))


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    vals[vals < EIGENVALUE_FLOOR] = 0.0
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(stats_a: FeatureStats, stats_b: FeatureStats) -> float:
    """Fréchet distance between two Gaussian feature fits.

    The cross term uses an eigendecomposition square root of the
    symmetrized product, with tiny eigenvalues floored to zero.
    """
    if stats_a.mean.shape != stats_b.mean.shape:
        raise ValueError("feature dimensions differ")
    diff = stats_a.mean - stats_b.mean
    sqrt_a = _psd_sqrt(stats_a.cov)
    inner = sqrt_a @ stats_b.cov @ sqrt_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    vals[vals < EIGENVALUE_FLOOR] = 0.0
    cross = np.sqrt(vals).sum()
    return float(diff @ diff + np.trace(stats_a.cov) + np.trace(stats_b.cov) - 2.0 * cross)


def perceptual_distance(image_a: torch.Tensor, image_b: torch.Tensor,
                        extractor: Optional[PerceptualExtractor] = None) -> float:
    """Deep-feature distance between two images in [-1, 1], CHW."""
    if extractor is None:
        extractor = _default_extractor()
    with torch.no_grad():
        feats_a = extractor(image_a.unsqueeze(0))
        feats_b = extractor(image_b.unsqueeze(0))
    total = 0.0
    for fa, fb in zip(feats_a, feats_b):
        na = fa / fa.norm(dim=1, keepdim=True).clamp_min(1e-8)
        nb = fb / fb.norm(dim=1, keepdim=True).clamp_min(1e-8)
        total += float(((na - nb) ** 2).sum(dim=1).mean())
    return total


_EXTRACTOR = None


def _default_extractor() -> PerceptualExtractor:
    global _EXTRACTOR
    if _EXTRACTOR is None:
        _EXTRACTOR = PerceptualExtractor()
    return _EXTRACTOR


def diversity(pairs: Sequence[Tuple[torch.Tensor, torch.Tensor]],
              extractor: Optional[PerceptualExtractor] = None) -> Tuple[float, float]:
    """Mean and std of perceptual distance over same-input generation pairs."""
    dists = [perceptual_distance(a, b, extractor) for a, b in pairs]
    if not dists:
        return 0.0, 0.0
    return float(np.mean(dists)), float(np.std(dists))


def iou(box_a, box_b) -> float:
    ax1, ay1, ax2, ay2 = [float(v) for v in box_a]
    bx1, by1, bx2, by2 = [float(v) for v in box_b]
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    area_a = max(0.0, ax2 - ax1) * max(0.0, ay2 - ay1)
    area_b = max(0.0, bx2 - bx1) * max(0.0, by2 - by1)
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def recall_at(ious: Iterable[float], threshold: float) -> float:
    ious = list(ious)
    if not ious:
        return 0.0
    return sum(1 for v in ious if v >= threshold) / len(ious)


class SmallCropClassifier(torch.nn.Module):
    """Compact conv classifier for 64x64 object crops (the pluggable default)."""

    def __init__(self, num_classes, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.features = torch.nn.Sequential(
            torch.nn.Conv2d(3, 16, 3, stride=2, padding=1),
            torch.nn.ReLU(inplace=True),
            torch.nn.Conv2d(16, 32, 3, stride=2, padding=1),
            torch.nn.ReLU(inplace=True),
            torch.nn.Conv2d(32, 64, 3, stride=2, padding=1),
            torch.nn.ReLU(inplace=True),
            torch.nn.AdaptiveAvgPool2d(1),
        )
        self.head = torch.nn.Linear(64, num_classes)

    def forward(self, crops):
        return self.head(self.features(crops).flatten(1))

    def fit(self, crops: torch.Tensor, labels: torch.Tensor,
            epochs: int = 30, batch_size: int = 64, lr: float = 1e-3,
            seed: int = 0) -> None:
        opt = torch.optim.Adam(self.parameters(), lr=lr)
        rng = np.random.default_rng(seed)
        self.train()
        for _ in range(epochs):
            order = rng.permutation(len(crops))
            for start in range(0, len(order), batch_size):
                idx = torch.from_numpy(order[start:start + batch_size])
                opt.zero_grad()
                loss = F.cross_entropy(self(crops[idx]), labels[idx])
                loss.backward()
                opt.step()
        self.eval()

    def predict(self, crops: torch.Tensor) -> np.ndarray:
        self.eval()
        with torch.no_grad():
            return self(crops).argmax(dim=1).cpu().numpy()

    def predict_probs(self, crops: torch.Tensor) -> np.ndarray:
        self.eval()
        with torch.no_grad():
            return torch.softmax(self(crops), dim=1).cpu().numpy()


def classification_accuracy(crops: torch.Tensor, labels: np.ndarray, classifier) -> float:
    """Top-1 accuracy of a crop classifier over generated-object crops."""
    predicted = classifier.predict(crops)
    labels = np.asarray(labels)
    if len(predicted) != len(labels):
        raise ValueError("crop and label counts differ")
    if len(labels) == 0:
        return 0.0
    return float((predicted == labels).mean())


def pooled_image_features(images: torch.Tensor,
                          extractor: Optional[PerceptualExtractor] = None) -> np.ndarray:
    """Per-image feature vectors: global average of each pyramid stage, concatenated."""
    if extractor is None:
        extractor = _default_extractor()
    with torch.no_grad():
        feats = extractor(images)
    pooled = [f.mean(dim=(2, 3)) for f in feats]
    return torch.cat(pooled, dim=1).cpu().numpy()
