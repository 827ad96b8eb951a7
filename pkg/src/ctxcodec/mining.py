"""Multi-scale context mining from the reconstruction buffer.

The temporal branch warps previous-frame *features*; the spatial branch warps
previous-frame *pixels* and lifts them into feature space, keeping texture
the feature chain tends to lose. Both are refined against the recurrent
hidden maps, per scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DimensionError
from .layers import ResidualBlock, conv


@dataclass
class ScaledPyramid:
    """Three feature maps at H, H/2, H/4."""

    level1: torch.Tensor
    level2: torch.Tensor
    level3: torch.Tensor

    @property
    def levels(self) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        return (self.level1, self.level2, self.level3)

    def __post_init__(self):
        h, w = self.level1.shape[-2:]
        for i, lvl in enumerate((self.level2, self.level3), start=1):
            if lvl.shape[-2:] != (h >> i, w >> i):
                raise DimensionError(
                    f"pyramid level {i + 1} is {tuple(lvl.shape[-2:])}, expected {(h >> i, w >> i)}"
                )


def warp_bilinear(src: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Sample src at p + flow(p) with bilinear taps and border clamping.

    flow channel 0 is horizontal displacement, channel 1 vertical, both in
    pixels at the source's own grid. Zero flow reproduces src exactly.
    """
    b, c, h, w = src.shape
    if flow.shape != (b, 2, h, w):
        raise DimensionError(f"flow {tuple(flow.shape)} does not match source {tuple(src.shape)}")
    grid_x = torch.arange(w, dtype=src.dtype, device=src.device)
    grid_y = torch.arange(h, dtype=src.dtype, device=src.device).view(-1, 1)
    xs = grid_x + flow[:, 0]
    ys = grid_y + flow[:, 1]
    x0 = torch.floor(xs)
    y0 = torch.floor(ys)
    fx = (xs - x0).unsqueeze(1)
    fy = (ys - y0).unsqueeze(1)
    x0 = x0.long()
    y0 = y0.long()
    x0c = x0.clamp(0, w - 1)
    x1c = (x0 + 1).clamp(0, w - 1)
    y0c = y0.clamp(0, h - 1)
    y1c = (y0 + 1).clamp(0, h - 1)

    flat = src.reshape(b, c, h * w)

    def tap(yi, xi):
        idx = (yi * w + xi).unsqueeze(1).expand(b, c, h, w).reshape(b, c, h * w)
        return flat.gather(2, idx).reshape(b, c, h, w)

    return (
        (1 - fy) * (1 - fx) * tap(y0c, x0c)
        + (1 - fy) * fx * tap(y0c, x1c)
        + fy * (1 - fx) * tap(y1c, x0c)
        + fy * fx * tap(y1c, x1c)
    )


def build_frame_pyramid(x_hat: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Pixel pyramid by 2x2 average pooling."""
    if x_hat.shape[-1] % 4 or x_hat.shape[-2] % 4:
        raise DimensionError("frame pyramid wants dims divisible by 4")
    half = F.avg_pool2d(x_hat, 2)
    return x_hat, half, F.avg_pool2d(half, 2)


class FeaturePyramid(nn.Module):
    """Convolutional downsampling of the buffered feature to three scales."""

    def __init__(self, feature_channels: int, widths: tuple[int, int, int]):
        super().__init__()
        self.head = conv(feature_channels, widths[0])
        self.down1 = conv(widths[0], widths[1], stride=2)
        self.down2 = conv(widths[1], widths[2], stride=2)

    def forward(self, f: torch.Tensor) -> ScaledPyramid:
        if f.shape[-1] % 4 or f.shape[-2] % 4:
            raise DimensionError("feature pyramid wants dims divisible by 4")
        l1 = self.head(f)
        l2 = self.down1(l1)
        return ScaledPyramid(l1, l2, self.down2(l2))


class HiddenPyramid(nn.Module):
    """Stride-2 downsamplers taking a chain hidden map to all three scales.

    Shared between the spatial and temporal branches.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.down1 = conv(channels, channels, stride=2)
        self.down2 = conv(channels, channels, stride=2)

    def forward(self, h: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        h2 = self.down1(h)
        return h, h2, self.down2(h2)


class ContextRefiner(nn.Module):
    """Per-level residual refinement of warped context (two blocks each)."""

    def __init__(self, widths: tuple[int, int, int]):
        super().__init__()
        self.blocks = nn.ModuleList(
            nn.Sequential(ResidualBlock(w), ResidualBlock(w)) for w in widths
        )

    def forward(self, level: int, x: torch.Tensor) -> torch.Tensor:
        return self.blocks[level](x)


class HiddenRefiner(nn.Module):
    """Merge a downsampled hidden map into a context level."""

    def __init__(self, widths: tuple[int, int, int], hidden_channels: int):
        super().__init__()
        self.merge = nn.ModuleList(conv(w + hidden_channels, w, k=1) for w in widths)
        self.blocks = nn.ModuleList(ResidualBlock(w) for w in widths)

    def forward(self, level: int, x: torch.Tensor, hidden: torch.Tensor) -> torch.Tensor:
        if x.shape[-2:] != hidden.shape[-2:]:
            raise DimensionError("hidden map not aligned with context level")
        return self.blocks[level](self.merge[level](torch.cat([x, hidden], dim=1)))


class TemporalContextMiner(nn.Module):
    def __init__(self, widths: tuple[int, int, int], hidden_channels: int, use_hidden: bool):
        super().__init__()
        self.refine = ContextRefiner(widths)
        self.use_hidden = use_hidden
        if use_hidden:
            self.hidden_refine = HiddenRefiner(widths, hidden_channels)

    def forward(
        self,
        fpyr: ScaledPyramid,
        flows: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
        ht_levels: tuple[torch.Tensor, ...] | None,
    ) -> ScaledPyramid:
        outs = []
        for i, (feat, flow) in enumerate(zip(fpyr.levels, flows)):
            c = self.refine(i, warp_bilinear(feat, flow))
            if self.use_hidden:
                c = self.hidden_refine(i, c, ht_levels[i])
            outs.append(c)
        return ScaledPyramid(*outs)


class SpatialContextMiner(nn.Module):
    """Pixel-domain warp, feature lifting, then the same refinement pair."""

    def __init__(self, widths: tuple[int, int, int], hidden_channels: int, use_hidden: bool):
        super().__init__()
        self.lift = nn.ModuleList(conv(3, w) for w in widths)
        self.refine = ContextRefiner(widths)
        self.use_hidden = use_hidden
        if use_hidden:
            self.hidden_refine = HiddenRefiner(widths, hidden_channels)

    def forward(
        self,
        xpyr: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
        flows: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
        hs_levels: tuple[torch.Tensor, ...] | None,
    ) -> ScaledPyramid:
        outs = []
        for i, (pix, flow) in enumerate(zip(xpyr, flows)):
            warped = warp_bilinear(pix, flow)
            c = self.refine(i, self.lift[i](warped))
            if self.use_hidden:
                c = self.hidden_refine(i, c, hs_levels[i])
            outs.append(c)
        return ScaledPyramid(*outs)
