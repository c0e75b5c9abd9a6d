import torch.nn as nn

EMBED_DIM = 128  # class / relation / layout embedding width
LOCATION_DIM = 35  # 25 grid cells + 10 size bins
NODE_DIM = EMBED_DIM + LOCATION_DIM
NOISE_DIM = 64
APPEARANCE_DIM = 32
MASK_SIZE = 64
NUM_RELATION_TYPES = 6
MIN_CHANNELS = 8


def scaled(channels: int, width: float) -> int:
    """Internal channel count under a width multiplier; interface dims never scale."""
    if width == 1.0:
        return channels
    return max(MIN_CHANNELS, int(round(channels * width)))


def init_embedding(emb: nn.Embedding) -> None:
    # embedding tables start small; convs/linears keep the default fan-based init
    nn.init.normal_(emb.weight, mean=0.0, std=0.02)
