"""Motion: coarse-to-fine flow estimation and the motion autoencoder.

Flow is estimated between the current frame and the previous reconstruction
with a small three-level pyramid network trained jointly with the rest of the
codec (residual flow per level). The flow field is compressed by a four-stage
autoencoder whose latent is entropy-coded under its own hyperprior.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import CorruptionError, DimensionError
from .layers import ConvStack, deconv
from .mining import warp_bilinear


def flow_pyramid(flow: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Three scales of a full-resolution field.

    Downsampling is a 2x2 bilinear average and displacement values shrink by
    0.5 per level so they stay expressed in the local grid's pixels.
    """
    if flow.shape[-1] % 4 or flow.shape[-2] % 4:
        raise DimensionError(f"flow dims {tuple(flow.shape[-2:])} not divisible by 4")
    half = F.avg_pool2d(flow, 2) * 0.5
    quarter = F.avg_pool2d(half, 2) * 0.5
    return flow, half, quarter


class FlowNet(nn.Module):
    """Residual flow over a 3-level image pyramid, coarse to fine."""

    def __init__(self, width: int = 24):
        super().__init__()
        # inputs per level: frame (3) + warped reference (3) + upsampled flow (2)
        self.blocks = nn.ModuleList(
            ConvStack([8, width, width, width, width, width, 2]) for _ in range(3)
        )

    def forward(self, x: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
        if x.shape != ref.shape:
            raise DimensionError(f"frame {tuple(x.shape)} vs reference {tuple(ref.shape)}")
        if x.shape[-1] % 4 or x.shape[-2] % 4:
            raise DimensionError("flow estimation wants dims divisible by 4")
        xs, refs = [x], [ref]
        for _ in range(2):
            xs.append(F.avg_pool2d(xs[-1], 2))
            refs.append(F.avg_pool2d(refs[-1], 2))
        flow = torch.zeros_like(xs[-1][:, :2])
        for level in range(2, -1, -1):
            if level < 2:
                flow = F.interpolate(flow, scale_factor=2, mode="bilinear", align_corners=False) * 2.0
            warped = warp_bilinear(refs[level], flow)
            flow = flow + self.blocks[level](torch.cat([xs[level], warped, flow], dim=1))
        return flow


class MotionAutoencoder(nn.Module):
    """Four stride-2 stages down to the motion latent and back."""

    def __init__(self, latent_channels: int = 64, width: int = 64):
        super().__init__()
        self.latent_channels = latent_channels
        self.encoder = ConvStack([2, width, width, width, latent_channels], strides=[2, 2, 2, 2])
        self.decoder = nn.Sequential(
            deconv(latent_channels, width),
            nn.LeakyReLU(0.1, inplace=True),
            deconv(width, width),
            nn.LeakyReLU(0.1, inplace=True),
            deconv(width, width),
            nn.LeakyReLU(0.1, inplace=True),
            deconv(width, 2),
        )

    def encode(self, flow: torch.Tensor) -> torch.Tensor:
        if flow.shape[1] != 2:
            raise DimensionError("motion encoder expects a 2-channel field")
        if flow.shape[-1] % 16 or flow.shape[-2] % 16:
            raise DimensionError("motion encoder wants dims padded to multiples of 16")
        return self.encoder(flow)

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        if latent.shape[1] != self.latent_channels:
            raise CorruptionError(
                f"motion latent carries {latent.shape[1]} channels, model expects {self.latent_channels}"
            )
        return self.decoder(latent)
