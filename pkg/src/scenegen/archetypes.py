"""Per-class appearance archetypes: clustering, slider ordering, persistence.

Archetypes are k-means centroids of appearance vectors embedded from every
training crop of a class. A seeded 1-D t-SNE embedding orders them so a
slider walk moves smoothly through appearance space.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from sklearn.cluster import KMeans

logger = logging.getLogger(__name__)

LIBRARY_VERSION = 1
DEFAULT_K = 100


@dataclass
class ClassArchetypes:
    centroids: np.ndarray  # [k, 32] raw k-means order
    order: np.ndarray  # slider position -> centroid row
    member_counts: np.ndarray  # [k]

    @property
    def count(self) -> int:
        return len(self.centroids)


@dataclass
class ArchetypeLibrary:
    per_class: Dict[int, ClassArchetypes] = field(default_factory=dict)
    k: int = DEFAULT_K
    seed: int = 0
    class_names: List[str] = field(default_factory=list)

    def archetype_count(self, class_id: int) -> int:
        entry = self.per_class.get(class_id)
        return entry.count if entry else 0

    def get_archetype(self, class_id: int, index: int) -> np.ndarray:
        """Lookup by slider-order index."""
        entry = self.per_class.get(class_id)
        if entry is None or not 0 <= index < entry.count:
            raise IndexError(f"archetype {index} out of range for class {class_id}")
        return entry.centroids[entry.order[index]].copy()

    def sample_random_archetype(self, class_id: int, rng: np.random.Generator) -> np.ndarray:
        entry = self.per_class.get(class_id)
        if entry is None or entry.count == 0:
            raise IndexError(f"class {class_id} has no archetypes")
        return self.get_archetype(class_id, int(rng.integers(0, entry.count)))


def _lex_less(a: np.ndarray, b: np.ndarray) -> bool:
    for x, y in zip(a, b):
        if x != y:
            return x < y
    return False


def _binary_search_affinities(sq_dists: np.ndarray, perplexity: float) -> np.ndarray:
    """Per-row Gaussian affinities whose entropy matches the target perplexity."""
    n = len(sq_dists)
    target = np.log(perplexity)
    P = np.zeros_like(sq_dists)
    for i in range(n):
        d = np.delete(sq_dists[i], i)
        lo, hi = 1e-12, 1e12
        beta = 1.0
        for _ in range(64):
            w = np.exp(-d * beta)
            total = w.sum()
            if total <= 1e-300:
                hi = beta
                beta = (lo + hi) / 2
                continue
            p = w / total
            entropy = -(p * np.log(np.clip(p, 1e-300, None))).sum()
            if abs(entropy - target) < 1e-7:
                break
            if entropy > target:
                lo = beta
            else:
                hi = beta
            beta = (lo + hi) / 2
        row = np.insert(w / max(total, 1e-300), i, 0.0)
        P[i] = row
    P = (P + P.T) / (2.0 * n)
    return np.clip(P, 1e-12, None)


def _tsne_1d(points: np.ndarray, perplexity: float, seed: int,
             iterations: int = 1000) -> np.ndarray:
    """Exact 1-D t-SNE, initialized from the first principal component.

    Small and self-contained: the archetype sets are at most a few hundred
    points, where the O(k^2) exact gradient is trivial and the
    full-scale PCA start keeps the optimization well behaved.
    """
    n = len(points)
    centered = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    y = centered @ vt[0]
    spread = y.std()
    if spread < 1e-12:
        rng = np.random.default_rng(seed)
        y = rng.normal(scale=1e-4, size=n)
    else:
        y = y / spread

    sq = ((points[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    P = _binary_search_affinities(sq, perplexity)

    velocity = np.zeros(n)
    lr = max(2.0, n / 4.0)
    for it in range(iterations):
        diff = y[:, None] - y[None, :]
        inv = 1.0 / (1.0 + diff ** 2)
        np.fill_diagonal(inv, 0.0)
        Q = inv / max(inv.sum(), 1e-300)
        grad = 4.0 * ((P - Q) * inv * diff).sum(axis=1)
        momentum = 0.5 if it < 100 else 0.8
        velocity = momentum * velocity - lr * grad
        y = y + velocity
        y = y - y.mean()
    return y


def order_centroids(centroids: np.ndarray, seed: int) -> np.ndarray:
    """Slider order from a seeded 1-D t-SNE embedding of the centroids.

    The 1-D embedding is only defined up to reflection, so the permutation
    is oriented to start at the lexicographically smaller endpoint.
    """
    k = len(centroids)
    if k < 2:
        return np.arange(k)
    if k == 2:
        order = np.arange(2)
    else:
        perplexity = min(30.0, max(1.0, (k - 1) / 3.0))
        coords = _tsne_1d(np.asarray(centroids, dtype=np.float64), perplexity, seed)
        order = np.argsort(coords, kind="stable")
    first = centroids[order[0]]
    last = centroids[order[-1]]
    if _lex_less(last, first):
        order = order[::-1].copy()
    return order


def build_archetypes(
    features_by_class: Dict[int, np.ndarray],
    k: int = DEFAULT_K,
    seed: int = 0,
    class_names: Optional[Sequence[str]] = None,
) -> ArchetypeLibrary:
    """Cluster each class's appearance vectors into at most k archetypes.

    Classes with fewer distinct vectors than k get one archetype per
    distinct vector; empty classes get none (logged, not an error).
    """
    lib = ArchetypeLibrary(k=k, seed=seed,
                           class_names=list(class_names) if class_names else [])
    for class_id in sorted(features_by_class):
        feats = np.asarray(features_by_class[class_id], dtype=np.float64)
        if feats.size == 0:
            logger.warning("class %d has no instances; zero archetypes", class_id)
            continue
        k_eff = min(k, len(np.unique(feats, axis=0)))
        km = KMeans(n_clusters=k_eff, n_init=10, max_iter=500, tol=0.0,
                    random_state=seed)
        km.fit(feats)
        counts = np.bincount(km.labels_, minlength=k_eff)
        # re-average so each centroid is exactly the mean of its members
        centroids = np.zeros_like(km.cluster_centers_)
        np.add.at(centroids, km.labels_, feats)
        centroids /= np.maximum(counts, 1)[:, None]
        lib.per_class[class_id] = ClassArchetypes(
            centroids=centroids.astype(np.float32),
            order=order_centroids(centroids, seed),
            member_counts=counts,
        )
    return lib


def save_library(lib: ArchetypeLibrary, path) -> None:
    manifest = {
        "version": LIBRARY_VERSION,
        "k": lib.k,
        "seed": lib.seed,
        "class_names": lib.class_names,
        "class_ids": sorted(lib.per_class),
    }
    arrays = {"manifest": np.frombuffer(json.dumps(manifest).encode(), dtype=np.uint8)}
    for class_id, entry in lib.per_class.items():
        arrays[f"class_{class_id}_centroids"] = entry.centroids
        arrays[f"class_{class_id}_order"] = entry.order.astype(np.int64)
        arrays[f"class_{class_id}_counts"] = entry.member_counts.astype(np.int64)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    path.write_bytes(buf.getvalue())


def load_library(path) -> ArchetypeLibrary:
    with np.load(Path(path)) as data:
        manifest = json.loads(bytes(data["manifest"]).decode())
        if manifest.get("version") != LIBRARY_VERSION:
            raise ValueError(f"unsupported library version: {manifest.get('version')}")
        lib = ArchetypeLibrary(k=manifest["k"], seed=manifest["seed"],
                               class_names=manifest["class_names"])
        for class_id in manifest["class_ids"]:
            lib.per_class[class_id] = ClassArchetypes(
                centroids=data[f"class_{class_id}_centroids"],
                order=data[f"class_{class_id}_order"],
                member_counts=data[f"class_{class_id}_counts"],
            )
    return lib


def embed_dataset_by_class(samples, appearance_net, device="cpu") -> Dict[int, np.ndarray]:
    """Run the appearance encoder on every ground-truth crop, grouped by class."""
    import torch

    appearance_net.eval()
    grouped: Dict[int, list] = {}
    with torch.no_grad():
        for sample in samples:
            crops = torch.from_numpy(sample.crops).to(device)
            vecs = appearance_net(crops).cpu().numpy()
            for cid, vec in zip(sample.class_ids, vecs):
                grouped.setdefault(int(cid), []).append(vec)
    return {cid: np.stack(vecs) for cid, vecs in grouped.items()}
