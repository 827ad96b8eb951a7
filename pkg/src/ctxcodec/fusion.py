"""Fusing spatial and temporal context with a multi-receptive-field block."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DimensionError
from .layers import conv
from .mining import ScaledPyramid


class InceptionFusion(nn.Module):
    """One fusion block per scale.

    Each block concatenates the two contexts and runs four parallel branches
    (1x1, 3x3, 5x5 as two stacked 3x3s, and 3x3 max-pool + 1x1), merges them
    back to the level width, and adds the temporal context as a residual, so
    an untrained block degrades to the temporal-only path.
    """

    def __init__(self, widths: tuple[int, int, int]):
        super().__init__()
        self.blocks = nn.ModuleList(_FusionBlock(w) for w in widths)

    def forward(self, cs: ScaledPyramid, ct: ScaledPyramid) -> ScaledPyramid:
        outs = []
        for block, s, t in zip(self.blocks, cs.levels, ct.levels):
            if s.shape != t.shape:
                raise DimensionError(
                    f"context levels disagree: {tuple(s.shape)} vs {tuple(t.shape)}"
                )
            outs.append(block(s, t))
        return ScaledPyramid(*outs)


class _FusionBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        branch = max(width // 4, 8)
        self.b1 = conv(2 * width, branch, k=1)
        self.b3 = conv(2 * width, branch)
        self.b5 = nn.Sequential(conv(2 * width, branch), nn.LeakyReLU(0.1, inplace=True), conv(branch, branch))
        self.bp = conv(2 * width, branch, k=1)
        self.merge = conv(4 * branch, width, k=1)

    def forward(self, cs: torch.Tensor, ct: torch.Tensor) -> torch.Tensor:
        x = torch.cat([cs, ct], dim=1)
        pooled = F.max_pool2d(x, 3, stride=1, padding=1)
        branches = torch.cat([self.b1(x), self.b3(x), self.b5(x), self.bp(pooled)], dim=1)
        return ct + self.merge(branches)
