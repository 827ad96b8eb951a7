"""Long-term reference chain: two ConvLSTMs over reconstructions and features.

One recurrent branch watches the previous reconstructed frame through a
pixel adaptor, the other watches the previous frame feature through a feature
adaptor. Their hidden maps feed context mining; their cell states are what
carries information further back than one frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import DimensionError
from .layers import ConvStack, conv


@dataclass
class ChainState:
    """Hidden and cell maps of both branches; all (B, C_h, H, W)."""

    hs: torch.Tensor      # spatial-branch hidden
    cell_s: torch.Tensor
    ht: torch.Tensor      # temporal-branch hidden
    cell_t: torch.Tensor

    def detached(self) -> "ChainState":
        return ChainState(*(t.detach() for t in (self.hs, self.cell_s, self.ht, self.cell_t)))

    def is_finite(self) -> bool:
        return all(torch.isfinite(t).all() for t in (self.hs, self.cell_s, self.ht, self.cell_t))


def init_state(
    height: int, width: int, channels: int, batch: int = 1,
    dtype: torch.dtype = torch.float32, device=None,
) -> ChainState:
    """All-zero state, used before the first inter frame of every GOP."""
    if height % 16 or width % 16:
        raise DimensionError(f"chain state wants padded dims, got {height}x{width}")
    z = torch.zeros(batch, channels, height, width, dtype=dtype, device=device)
    return ChainState(z, z.clone(), z.clone(), z.clone())


def conv_lstm_step(
    x: torch.Tensor, h_prev: torch.Tensor, c_prev: torch.Tensor, gates: nn.Conv2d
) -> tuple[torch.Tensor, torch.Tensor]:
    """One ConvLSTM update.

    `gates` maps the [h_prev, x] concatenation to the stacked (i, f, o, g)
    pre-activations; i/f/o are sigmoids, g is a tanh, c = f*c_prev + i*g,
    h = o*tanh(c).
    """
    if x.shape != h_prev.shape or x.shape != c_prev.shape:
        raise DimensionError(
            f"input/hidden/cell must align: {tuple(x.shape)} vs {tuple(h_prev.shape)} vs {tuple(c_prev.shape)}"
        )
    pre = gates(torch.cat([h_prev, x], dim=1))
    i, f, o, g = pre.chunk(4, dim=1)
    i, f, o = torch.sigmoid(i), torch.sigmoid(f), torch.sigmoid(o)
    c = f * c_prev + i * torch.tanh(g)
    h = o * torch.tanh(c)
    return h, c


class ConvLSTMCell(nn.Module):
    def __init__(self, channels: int, kernel: int = 3):
        super().__init__()
        self.gates = conv(2 * channels, 4 * channels, k=kernel)

    def forward(self, x, h_prev, c_prev):
        return conv_lstm_step(x, h_prev, c_prev, self.gates)


class ReferenceChain(nn.Module):
    """Adaptors plus the two recurrent branches."""

    def __init__(self, chain_channels: int, feature_channels: int):
        super().__init__()
        c = chain_channels
        self.pixel_adaptor = ConvStack([3, c, c])
        self.feature_adaptor = ConvStack([feature_channels, c, c])
        self.spatial_lstm = ConvLSTMCell(c)
        self.temporal_lstm = ConvLSTMCell(c)
        self.channels = c

    def init_state(self, height: int, width: int, batch: int = 1, dtype=torch.float32, device=None) -> ChainState:
        return init_state(height, width, self.channels, batch, dtype, device)

    def advance(self, x_hat_prev: torch.Tensor, f_prev: torch.Tensor, state: ChainState) -> ChainState:
        """Feed the newest reconstruction/feature pair; returns a fresh state."""
        if x_hat_prev.shape[-2:] != f_prev.shape[-2:] or x_hat_prev.shape[-2:] != state.hs.shape[-2:]:
            raise DimensionError("frame, feature, and state must share spatial dims")
        fx = self.pixel_adaptor(x_hat_prev)
        ff = self.feature_adaptor(f_prev)
        hs, cell_s = self.spatial_lstm(fx, state.hs, state.cell_s)
        ht, cell_t = self.temporal_lstm(ff, state.ht, state.cell_t)
        return ChainState(hs, cell_s, ht, cell_t)
