"""Probability models, rate estimation, and CDF-table production.

Latent symbols live in the integer support [-128, 127] (index space 0..255
for the range coder). During training, rates come from the continuous models
evaluated at noisy latents; for real coding, per-symbol Gaussian bins (or
per-channel factorized bins) are quantized into 16-bit cumulative tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy.special import ndtr

from .errors import NumericError
from .layers import ConvStack, conv, deconv
from .rans import PROB_SCALE

SYMBOL_MIN = -128
SYMBOL_MAX = 127
NUM_SYMBOLS = SYMBOL_MAX - SYMBOL_MIN + 1
PROB_FLOOR = 2.0**-16


@dataclass
class RateEstimate:
    """Bits per latent stream of one frame."""

    motion: float = 0.0
    hyper_motion: float = 0.0
    context: float = 0.0
    hyper_context: float = 0.0
    breakdown_extra: dict = field(default_factory=dict)

    @property
    def bits(self) -> float:
        return self.motion + self.hyper_motion + self.context + self.hyper_context


def quantize_symbols(values: torch.Tensor, mean: torch.Tensor | float = 0.0) -> torch.Tensor:
    """Mean-centered rounding with clipping into the coder support."""
    sym = torch.round(values - mean)
    return torch.clamp(sym, SYMBOL_MIN, SYMBOL_MAX)


def dequantize_symbols(symbols: torch.Tensor, mean: torch.Tensor | float = 0.0) -> torch.Tensor:
    return symbols + mean


def noisy_quantize(values: torch.Tensor, mean: torch.Tensor | float = 0.0) -> torch.Tensor:
    """Additive-uniform-noise proxy used on the rate path during training."""
    noise = torch.empty_like(values).uniform_(-0.5, 0.5)
    return (values - mean) + noise


def ste_round(values: torch.Tensor, mean: torch.Tensor | float = 0.0) -> torch.Tensor:
    """Straight-through rounding for the reconstruction path."""
    centered = values - mean
    return values + (torch.round(centered) - centered).detach()


def gaussian_bin_probability(x: torch.Tensor, mu, sigma) -> torch.Tensor:
    """P((x-0.5, x+0.5]) under N(mu, sigma), floored at 2^-16."""
    upper = torch.special.ndtr((x + 0.5 - mu) / sigma)
    lower = torch.special.ndtr((x - 0.5 - mu) / sigma)
    return torch.clamp(upper - lower, min=PROB_FLOOR)


def estimate_rate(symbols: torch.Tensor, mu, sigma) -> torch.Tensor:
    """Total bits of `symbols` under per-element Gaussians (differentiable)."""
    for t in (symbols, mu, sigma):
        if isinstance(t, torch.Tensor) and not torch.isfinite(t).all():
            raise NumericError("non-finite value in rate estimation")
    p = gaussian_bin_probability(symbols, mu, sigma)
    return (-torch.log2(p)).sum()


def bits_of_probability(p: torch.Tensor) -> torch.Tensor:
    return (-torch.log2(torch.clamp(p, min=PROB_FLOOR))).sum()


def quantize_pmf(pmf: np.ndarray) -> np.ndarray:
    """Largest-remainder quantization of (N, S) probabilities to 16-bit tables.

    Every symbol gets frequency >= 1 and each row sums to exactly 2^16;
    ties break toward the lower symbol index. Returns cumulative rows (N, S+1).
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.ndim == 1:
        pmf = pmf[None]
    n, s = pmf.shape
    budget = PROB_SCALE - s
    pmf = np.maximum(pmf, 0.0)
    totals = pmf.sum(axis=1, keepdims=True)
    pmf = np.where(totals > 0, pmf / np.maximum(totals, 1e-300), 1.0 / s)
    scaled = pmf * budget
    base = np.floor(scaled)
    remainder = scaled - base
    deficit = (budget - base.sum(axis=1)).astype(np.int64)
    # stable argsort on -remainder keeps index order for equal remainders
    order = np.argsort(-remainder, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(s), (n, s)).copy(), axis=1)
    freqs = base.astype(np.int64) + 1 + (ranks < deficit[:, None])
    cdf = np.zeros((n, s + 1), dtype=np.uint32)
    cdf[:, 1:] = np.cumsum(freqs, axis=1)
    return cdf


def build_cdf(mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Quantized per-symbol Gaussian tables over the coder support.

    mu/sigma broadcast to a flat list of coding contexts. Bin masses are
    truncated to the support and renormalized, so a huge sigma degrades to a
    near-uniform table; symbols clipped into the support keep frequency >= 1
    from the quantizer's minimum.
    """
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    sigma = np.asarray(sigma, dtype=np.float64).reshape(-1)
    if not (np.isfinite(mu).all() and np.isfinite(sigma).all()):
        raise NumericError("non-finite prior parameters")
    edges = np.arange(SYMBOL_MIN, SYMBOL_MAX + 2, dtype=np.float64) - 0.5  # 257 edges
    z = (edges[None, :] - mu[:, None]) / sigma[:, None]
    pmf = np.diff(ndtr(z), axis=1)
    return quantize_pmf(pmf)


def symbols_to_indices(symbols: np.ndarray) -> np.ndarray:
    return np.asarray(symbols, dtype=np.int64).reshape(-1) - SYMBOL_MIN


def indices_to_symbols(indices: np.ndarray) -> np.ndarray:
    return np.asarray(indices, dtype=np.int64) + SYMBOL_MIN


class FactorizedPrior(nn.Module):
    """Non-parametric per-channel cumulative model for hyper-latents.

    A monotone scalar network (3 internal layers) per channel; probabilities
    come from differences of the cumulative at bin edges.
    """

    def __init__(self, channels: int, filters: tuple[int, ...] = (3, 3, 3), init_scale: float = 10.0):
        super().__init__()
        self.channels = channels
        dims = (1,) + filters + (1,)
        scale = init_scale ** (1.0 / (len(dims) - 1))
        self._weights = nn.ParameterList()
        self._biases = nn.ParameterList()
        self._factors = nn.ParameterList()
        for i in range(len(dims) - 1):
            init = float(np.log(np.expm1(1.0 / scale / dims[i + 1])))
            self._weights.append(nn.Parameter(torch.full((channels, dims[i + 1], dims[i]), init)))
            self._biases.append(nn.Parameter(torch.empty(channels, dims[i + 1], 1).uniform_(-0.5, 0.5)))
            if i < len(dims) - 2:
                self._factors.append(nn.Parameter(torch.zeros(channels, dims[i + 1], 1)))

    def _logits(self, x: torch.Tensor) -> torch.Tensor:
        # x: (C, N) points per channel -> logits of the cumulative, same shape
        h = x.unsqueeze(1)  # (C, 1, N)
        for i, (w, b) in enumerate(zip(self._weights, self._biases)):
            h = torch.bmm(F.softplus(w), h) + b
            if i < len(self._factors):
                h = h + torch.tanh(self._factors[i]) * torch.tanh(h)
        return h.squeeze(1)

    def bin_probability(self, values: torch.Tensor) -> torch.Tensor:
        """p((v-0.5, v+0.5]) per element of a (B, C, H, W) tensor."""
        b, c, h, w = values.shape
        flat = values.permute(1, 0, 2, 3).reshape(c, -1)
        upper = self._logits(flat + 0.5)
        lower = self._logits(flat - 0.5)
        sign = -torch.sign(upper + lower).detach()
        p = torch.abs(torch.sigmoid(sign * upper) - torch.sigmoid(sign * lower))
        p = torch.clamp(p, min=PROB_FLOOR)
        return p.reshape(c, b, h, w).permute(1, 0, 2, 3)

    @torch.no_grad()
    def cdf_tables(self) -> np.ndarray:
        """Quantized tables, one row per channel, evaluated in float64."""
        edges = torch.arange(SYMBOL_MIN, SYMBOL_MAX + 2, dtype=torch.float64) - 0.5
        pts = edges.expand(self.channels, -1)
        params = [(w.double(), b.double()) for w, b in zip(self._weights, self._biases)]
        h = pts.unsqueeze(1)
        for i, (w, b) in enumerate(params):
            h = torch.bmm(F.softplus(w), h) + b
            if i < len(self._factors):
                f = self._factors[i].double()
                h = h + torch.tanh(f) * torch.tanh(h)
        cum = torch.sigmoid(h.squeeze(1)).numpy()
        return quantize_pmf(np.diff(cum, axis=1))


class SigmaFloor(nn.Module):
    """sigma = floor + softplus(raw): strictly above the configured floor."""

    def __init__(self, floor: float):
        super().__init__()
        self.floor = floor

    def forward(self, raw: torch.Tensor) -> torch.Tensor:
        return self.floor + F.softplus(raw)


def _pad_to_multiple4(latent: torch.Tensor) -> torch.Tensor:
    # frame dims are multiples of 16, so the latent grid may be any size;
    # the hyper path downsamples twice and must round-trip exactly
    h, w = latent.shape[-2:]
    return F.pad(latent, (0, -w % 4, 0, -h % 4), mode="replicate")


class MotionPrior(nn.Module):
    """Hyperprior for the motion latent: factorized hyper, Gaussian conditional."""

    def __init__(self, latent_channels: int, hyper_channels: int, sigma_floor: float):
        super().__init__()
        self.hyper_encoder = ConvStack([latent_channels, hyper_channels, hyper_channels], strides=[2, 2])
        self.hyper_decoder = nn.Sequential(
            deconv(hyper_channels, hyper_channels),
            nn.LeakyReLU(0.1, inplace=True),
            deconv(hyper_channels, latent_channels * 2),
        )
        self.hyper_prior = FactorizedPrior(hyper_channels)
        self.sigma = SigmaFloor(sigma_floor)

    def encode_hyper(self, latent: torch.Tensor) -> torch.Tensor:
        return self.hyper_encoder(_pad_to_multiple4(latent))

    def params_from_hyper(self, z_hat: torch.Tensor, latent_hw: tuple[int, int]) -> tuple[torch.Tensor, torch.Tensor]:
        h, w = latent_hw
        mu, sigma_raw = self.hyper_decoder(z_hat)[..., :h, :w].chunk(2, dim=1)
        return mu, self.sigma(sigma_raw)


class ContextPrior(nn.Module):
    """Hyperprior for the frame latent, fused with a temporal branch on C^3."""

    def __init__(self, latent_channels: int, hyper_channels: int, ctx3_channels: int, sigma_floor: float):
        super().__init__()
        self.hyper_encoder = ConvStack([latent_channels, hyper_channels, hyper_channels], strides=[2, 2])
        self.hyper_decoder = nn.Sequential(
            deconv(hyper_channels, hyper_channels),
            nn.LeakyReLU(0.1, inplace=True),
            deconv(hyper_channels, latent_channels),
        )
        # C^3 sits at 1/4 resolution; two stride-2 convs land on the latent grid
        self.temporal_branch = ConvStack([ctx3_channels, latent_channels, latent_channels], strides=[2, 2])
        self.head = nn.Sequential(
            conv(latent_channels * 2, latent_channels * 2, k=1),
            nn.LeakyReLU(0.1, inplace=True),
            conv(latent_channels * 2, latent_channels * 2, k=1),
        )
        self.hyper_prior = FactorizedPrior(hyper_channels)
        self.sigma = SigmaFloor(sigma_floor)

    def encode_hyper(self, latent: torch.Tensor) -> torch.Tensor:
        return self.hyper_encoder(_pad_to_multiple4(latent))

    def params_from_hyper(
        self, z_hat: torch.Tensor, ctx3: torch.Tensor, latent_hw: tuple[int, int]
    ) -> tuple[torch.Tensor, torch.Tensor]:
        h, w = latent_hw
        hyper_feat = self.hyper_decoder(z_hat)[..., :h, :w]
        feats = torch.cat([hyper_feat, self.temporal_branch(ctx3)], dim=1)
        mu, sigma_raw = self.head(feats).chunk(2, dim=1)
        return mu, self.sigma(sigma_raw)
