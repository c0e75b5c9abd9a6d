"""Object-side networks: graph layout encoder, mask / box heads, appearance encoder."""

import torch
import torch.nn as nn

from .common import (
    APPEARANCE_DIM,
    EMBED_DIM,
    LOCATION_DIM,
    MASK_SIZE,
    NODE_DIM,
    NOISE_DIM,
    NUM_RELATION_TYPES,
    init_embedding,
    scaled,
)


class GraphConvLayer(nn.Module):
    """One round of edge-triple updates followed by symmetric node pooling.

    Each edge concatenates (subject, edge, object) vectors, pushes them
    through a shared two-layer transform, and the three slots are split back
    out. A node's new vector is the mean of every candidate it received from
    incident edges; isolated nodes run the same transform on a zero-edge
    self triple.
    """

    def __init__(self, dim, hidden):
        super().__init__()
        self.dim = dim
        self.net = nn.Sequential(
            nn.Linear(3 * dim, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, 3 * dim),
        )

    def forward(self, node_vecs, edge_vecs, edge_index):
        n = node_vecs.shape[0]
        pooled = torch.zeros_like(node_vecs)
        counts = torch.zeros(n, dtype=node_vecs.dtype, device=node_vecs.device)

        if edge_vecs.shape[0] > 0:
            subj, obj = edge_index[:, 0], edge_index[:, 1]
            triples = torch.cat([node_vecs[subj], edge_vecs, node_vecs[obj]], dim=1)
            out = self.net(triples)
            subj_cand, new_edges, obj_cand = out.split(self.dim, dim=1)
            pooled.index_add_(0, subj, subj_cand)
            pooled.index_add_(0, obj, obj_cand)
            ones = torch.ones(len(subj), dtype=counts.dtype, device=counts.device)
            counts.index_add_(0, subj, ones)
            counts.index_add_(0, obj, ones)
        else:
            new_edges = edge_vecs

        isolated = counts == 0
        if isolated.any():
            iso = node_vecs[isolated]
            zeros = torch.zeros_like(iso)
            out = self.net(torch.cat([iso, zeros, iso], dim=1))
            subj_cand, _, obj_cand = out.split(self.dim, dim=1)
            pooled[isolated] = 0.5 * (subj_cand + obj_cand)
            counts = counts.masked_fill(isolated, 1.0)

        return pooled / counts.unsqueeze(1), new_edges


class LayoutGraphNet(nn.Module):
    """Graph network turning a scene graph into per-object layout embeddings.

    Class and relation identities come from learned embedding tables, node
    inputs are the class embedding concatenated with the 35-entry location
    vector, and five graph-conv rounds propagate context along the edges.
    """

    def __init__(self, num_classes, width=1.0, num_layers=5):
        super().__init__()
        self.num_classes = num_classes
        self.class_table = nn.Embedding(num_classes, EMBED_DIM)
        self.relation_table = nn.Embedding(NUM_RELATION_TYPES, EMBED_DIM)
        init_embedding(self.class_table)
        init_embedding(self.relation_table)
        self.node_in = nn.Linear(NODE_DIM, EMBED_DIM)
        self.edge_in = nn.Linear(EMBED_DIM, EMBED_DIM)
        # width scaling thins conv stacks only; vector-path compute is
        # negligible and narrowing it starves the whole layout pipeline
        self.layers = nn.ModuleList(
            GraphConvLayer(EMBED_DIM, 512) for _ in range(num_layers)
        )

    def forward(self, class_ids, location_vecs, edge_index, edge_types):
        """class_ids [n], location_vecs [n, 35], edge_index [m, 2], edge_types [m].

        Returns layout embeddings [n, EMBED_DIM]. Edges reference node
        positions (not object ids); graphs from several scenes can be packed
        by offsetting the indices.
        """
        n = class_ids.shape[0]
        if n == 0:
            return torch.zeros(0, EMBED_DIM, device=location_vecs.device)
        if class_ids.min() < 0 or class_ids.max() >= self.num_classes:
            raise ValueError("class id out of range")
        m = edge_index.shape[0]
        if m > 0:
            if edge_index.min() < 0 or edge_index.max() >= n:
                raise ValueError("edge endpoint out of range")
            if edge_types.min() < 0 or edge_types.max() >= NUM_RELATION_TYPES:
                raise ValueError("relation type out of range")

        nodes = torch.cat([self.class_table(class_ids), location_vecs], dim=1)
        node_vecs = self.node_in(nodes)
        edge_vecs = self.edge_in(self.relation_table(edge_types)) if m else \
            torch.zeros(0, EMBED_DIM, device=node_vecs.device, dtype=node_vecs.dtype)

        for layer in self.layers:
            node_vecs, edge_vecs = layer(node_vecs, edge_vecs, edge_index)
        return node_vecs


class UpsampleConvBlock(nn.Module):
    """2x nearest upsample, 3x3 conv, batch norm, ReLU."""

    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.block = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=1, padding=1),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class MaskGenerator(nn.Module):
    """Decode a layout embedding plus a noise draw into a 64x64 soft mask."""

    def __init__(self, width=1.0):
        super().__init__()
        f = scaled(192, width)
        in_ch = EMBED_DIM + NOISE_DIM
        blocks = [UpsampleConvBlock(in_ch, f)]
        blocks += [UpsampleConvBlock(f, f) for _ in range(5)]
        self.blocks = nn.Sequential(*blocks)
        self.head = nn.Conv2d(f, 1, kernel_size=7, padding=3)

    def forward(self, layout_vecs, noise):
        if layout_vecs.shape[-1] != EMBED_DIM or noise.shape[-1] != NOISE_DIM:
            raise ValueError(
                f"expected [n, {EMBED_DIM}] embeddings and [n, {NOISE_DIM}] noise"
            )
        x = torch.cat([layout_vecs, noise], dim=1)
        x = x.unsqueeze(-1).unsqueeze(-1)  # n x 192 x 1 x 1, doubled six times
        x = self.blocks(x)
        return torch.sigmoid(self.head(x)).squeeze(1)


class BoxPredictor(nn.Module):
    """Three fully connected layers from a layout embedding to raw box ratios."""

    def __init__(self, width=1.0):
        super().__init__()
        del width  # fully connected throughout; nothing worth thinning
        self.net = nn.Sequential(
            nn.Linear(EMBED_DIM, 128),
            nn.ReLU(inplace=True),
            nn.Linear(128, 512),
            nn.ReLU(inplace=True),
            nn.Linear(512, 4),
        )
        # start from a live centered box; all-degenerate boxes give the
        # norm layers downstream constant inputs and unstable gradients
        with torch.no_grad():
            self.net[-1].bias.copy_(torch.tensor([0.2, 0.2, 0.8, 0.8]))

    def forward(self, layout_vecs):
        if layout_vecs.shape[-1] != EMBED_DIM:
            raise ValueError(f"expected [n, {EMBED_DIM}] embeddings")
        return self.net(layout_vecs)


class ConvBNBlock(nn.Module):
    """Stride-2 4x4 conv, batch norm, ReLU."""

    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class AppearanceEncoder(nn.Module):
    """Embed a 64x64 object crop into a 32-dim appearance vector."""

    def __init__(self, width=1.0):
        super().__init__()
        c1, c2, c3 = scaled(64, width), scaled(128, width), scaled(256, width)
        self.convs = nn.Sequential(
            ConvBNBlock(3, c1),
            ConvBNBlock(c1, c2),
            ConvBNBlock(c2, c3),
        )
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Sequential(
            nn.Linear(c3, 192),
            nn.ReLU(inplace=True),
            nn.Linear(192, 64),
            nn.ReLU(inplace=True),
            nn.Linear(64, APPEARANCE_DIM),
        )

    def forward(self, crops):
        if crops.dim() != 4 or crops.shape[1:] != (3, MASK_SIZE, MASK_SIZE):
            raise ValueError(f"expected [n, 3, {MASK_SIZE}, {MASK_SIZE}] crops")
        x = self.convs(crops)
        x = self.pool(x).flatten(1)
        return self.fc(x)
