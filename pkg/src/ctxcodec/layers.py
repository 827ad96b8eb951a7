"""Small shared network blocks."""

from __future__ import annotations

import torch.nn as nn


def conv(c_in: int, c_out: int, k: int = 3, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(c_in, c_out, k, stride=stride, padding=k // 2)


def deconv(c_in: int, c_out: int) -> nn.ConvTranspose2d:
    # exact 2x upsampling for even input sizes
    return nn.ConvTranspose2d(c_in, c_out, 4, stride=2, padding=1)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = conv(channels, channels)
        self.conv2 = conv(channels, channels)
        self.act = nn.LeakyReLU(0.1, inplace=True)

    def forward(self, x):
        y = self.conv2(self.act(self.conv1(x)))
        return x + y


class ConvStack(nn.Sequential):
    """convs with LeakyReLU between them (none after the last)."""

    def __init__(self, widths: list[int], strides: list[int] | None = None, k: int = 3):
        strides = strides or [1] * (len(widths) - 1)
        layers: list[nn.Module] = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            layers.append(conv(a, b, k, stride=strides[i]))
            if i < len(widths) - 2:
                layers.append(nn.LeakyReLU(0.1, inplace=True))
        super().__init__(*layers)
