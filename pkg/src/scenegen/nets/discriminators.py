"""The three adversaries: mask, layout+image (two scales), and object crop.

Every forward returns (score, features) so the feature-matching losses can
reuse the same passes; feature lists keep a fixed layer order.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .common import APPEARANCE_DIM, MASK_SIZE, scaled
from ..layout import crop_regions


class MaskDiscriminator(nn.Module):
    """Patch discriminator on 64x64 masks, conditioned on the object class.

    The class one-hot is broadcast spatially and concatenated after the
    first conv; the score is a 16x16 patch map.
    """

    def __init__(self, num_classes, width=1.0):
        super().__init__()
        self.num_classes = num_classes
        c1, c2 = scaled(64, width), scaled(128, width)
        self.conv1 = nn.Conv2d(1, c1, kernel_size=3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(c1 + num_classes, c2, kernel_size=3, stride=1, padding=1)
        self.norm2 = nn.InstanceNorm2d(c2)
        self.conv3 = nn.Conv2d(c2, 1, kernel_size=3, stride=1, padding=1)

    def forward(self, masks, class_ids):
        if masks.dim() == 3:
            masks = masks.unsqueeze(1)
        if class_ids.min() < 0 or class_ids.max() >= self.num_classes:
            raise ValueError("class id out of range")
        x = F.leaky_relu(self.conv1(masks), 0.2)
        f1 = x
        onehot = torch.zeros(
            masks.shape[0], self.num_classes, dtype=x.dtype, device=x.device
        )
        onehot[torch.arange(masks.shape[0]), class_ids] = 1.0
        cond = onehot.unsqueeze(-1).unsqueeze(-1).expand(-1, -1, *x.shape[2:])
        x = F.leaky_relu(self.norm2(self.conv2(torch.cat([x, cond], dim=1))), 0.2)
        f2 = x
        score = F.avg_pool2d(self.conv3(x), kernel_size=3, stride=2, padding=1)
        return score, [f1, f2, score]


class LayoutImageDiscriminator(nn.Module):
    """Patch discriminator over a channel-concatenated (layout tensor, image) pair."""

    def __init__(self, num_classes, width=1.0):
        super().__init__()
        in_ch = num_classes + APPEARANCE_DIM + 3
        c = [scaled(ch, width) for ch in (64, 128, 256, 512)]
        self.conv1 = nn.Conv2d(in_ch, c[0], kernel_size=4, stride=2, padding=2)
        self.conv2 = nn.Conv2d(c[0], c[1], kernel_size=4, stride=2, padding=2)
        self.norm2 = nn.InstanceNorm2d(c[1])
        self.conv3 = nn.Conv2d(c[1], c[2], kernel_size=4, stride=2, padding=2)
        self.norm3 = nn.InstanceNorm2d(c[2])
        self.conv4 = nn.Conv2d(c[2], c[3], kernel_size=4, stride=1, padding=2)
        self.norm4 = nn.InstanceNorm2d(c[3])
        self.conv5 = nn.Conv2d(c[3], 1, kernel_size=4, stride=1, padding=2)

    def forward(self, layout_tensor, image):
        if layout_tensor.shape[-2:] != image.shape[-2:]:
            raise ValueError("layout tensor and image are not spatially aligned")
        x = torch.cat([layout_tensor, image], dim=1)
        f1 = F.leaky_relu(self.conv1(x), 0.2)
        f2 = F.leaky_relu(self.norm2(self.conv2(f1)), 0.2)
        f3 = F.leaky_relu(self.norm3(self.conv3(f2)), 0.2)
        f4 = F.leaky_relu(self.norm4(self.conv4(f3)), 0.2)
        score = self.conv5(f4)
        return score, [f1, f2, f3, f4, score]


def halve_resolution(x):
    """Exact 2x average pooling used between the two discriminator scales."""
    return F.avg_pool2d(x, kernel_size=2, stride=2)


class MultiScaleLayoutImageDiscriminator(nn.Module):
    """Two independent layout+image discriminators at full and half scale."""

    def __init__(self, num_classes, width=1.0):
        super().__init__()
        self.full_scale = LayoutImageDiscriminator(num_classes, width)
        self.half_scale = LayoutImageDiscriminator(num_classes, width)

    def forward(self, layout_tensor, image):
        out_full = self.full_scale(layout_tensor, image)
        out_half = self.half_scale(halve_resolution(layout_tensor),
                                   halve_resolution(image))
        return [out_full, out_half]


class ObjectPatchDiscriminator(nn.Module):
    """Scalar realness score for a single 64x64 object crop."""

    def __init__(self, width=1.0):
        super().__init__()
        c1, c2, c3 = scaled(64, width), scaled(128, width), scaled(256, width)
        self.conv1 = nn.Conv2d(3, c1, kernel_size=4, stride=2, padding=1)
        self.bn1 = nn.BatchNorm2d(c1)
        self.conv2 = nn.Conv2d(c1, c2, kernel_size=4, stride=2, padding=1)
        self.bn2 = nn.BatchNorm2d(c2)
        self.conv3 = nn.Conv2d(c2, c3, kernel_size=4, stride=2, padding=1)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc1 = nn.Linear(c3, 1024)
        self.fc2 = nn.Linear(1024, 1)

    def forward(self, crops):
        if crops.dim() != 4 or crops.shape[1:] != (3, MASK_SIZE, MASK_SIZE):
            raise ValueError(f"expected [n, 3, {MASK_SIZE}, {MASK_SIZE}] crops")
        f1 = F.relu(self.bn1(self.conv1(crops)))
        f2 = F.relu(self.bn2(self.conv2(f1)))
        f3 = F.relu(self.conv3(f2))
        x = self.pool(f3).flatten(1)
        score = self.fc2(F.relu(self.fc1(x))).squeeze(1)
        return score, [f1, f2, f3]


def crop_objects(image, boxes, size: int = MASK_SIZE):
    """Differentiable crop-and-resize of each box region to size x size."""
    return crop_regions(image, boxes, size)
