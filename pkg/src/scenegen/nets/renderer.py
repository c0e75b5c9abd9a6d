"""Encoder-decoder residual network from a layout tensor to an RGB image."""

import torch.nn as nn

from .common import APPEARANCE_DIM, scaled


class ResidualBlock(nn.Module):
    def __init__(self, ch):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(ch, ch, kernel_size=3),
            nn.InstanceNorm2d(ch),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(ch, ch, kernel_size=3),
            nn.InstanceNorm2d(ch),
        )

    def forward(self, x):
        return x + self.block(x)


class ImageRenderer(nn.Module):
    """7x7 stem, four stride-2 encoders, residual trunk, four decoders, tanh head.

    Fully convolutional: the same weights render 64, 128 or 256 square
    layout tensors. Output pixels live in [-1, 1].
    """

    def __init__(self, num_classes, width=1.0, num_res_blocks=9):
        super().__init__()
        self.num_classes = num_classes
        in_ch = num_classes + APPEARANCE_DIM
        stem = scaled(64, width)
        down = [scaled(c, width) for c in (128, 256, 512, 1024)]

        layers = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(in_ch, stem, kernel_size=7),
            nn.InstanceNorm2d(stem),
            nn.ReLU(inplace=True),
        ]
        prev = stem
        for ch in down:
            layers += [
                nn.ReflectionPad2d(1),
                nn.Conv2d(prev, ch, kernel_size=3, stride=2),
                nn.InstanceNorm2d(ch),
                nn.ReLU(inplace=True),
            ]
            prev = ch
        layers += [ResidualBlock(prev) for _ in range(num_res_blocks)]
        for ch in reversed([stem] + down[:-1]):
            layers += [
                nn.ConvTranspose2d(prev, ch, kernel_size=3, stride=2,
                                   padding=1, output_padding=1),
                nn.InstanceNorm2d(ch),
                nn.ReLU(inplace=True),
            ]
            prev = ch
        layers += [
            nn.ReflectionPad2d(3),
            nn.Conv2d(prev, 3, kernel_size=7),
            nn.Tanh(),
        ]
        self.net = nn.Sequential(*layers)

    def forward(self, layout_tensor):
        expected = self.num_classes + APPEARANCE_DIM
        if layout_tensor.dim() != 4 or layout_tensor.shape[1] != expected:
            raise ValueError(
                f"expected [n, {expected}, H, W] layout tensor, "
                f"got {tuple(layout_tensor.shape)}"
            )
        return self.net(layout_tensor)
