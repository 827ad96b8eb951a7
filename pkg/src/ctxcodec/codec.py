"""Conditional frame coding: contextual transforms, buffer, full model.

The contextual encoder sees the frame with the fused context concatenated at
matching strides; the decoder mirrors that and ends in a frame generator that
emits both the reconstruction and the feature stored for the next frame.
Every decoder-side computation here depends only on symbols, the buffer, and
parameters, never on the source frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .chain import ChainState, ReferenceChain
from .config import CodecConfig
from .entropy import (
    ContextPrior,
    MotionPrior,
    bits_of_probability,
    dequantize_symbols,
    gaussian_bin_probability,
    noisy_quantize,
    quantize_symbols,
    ste_round,
)
from .errors import CorruptionError, DimensionError
from .fusion import InceptionFusion
from .layers import ConvStack, ResidualBlock, conv, deconv
from .mining import (
    FeaturePyramid,
    HiddenPyramid,
    ScaledPyramid,
    SpatialContextMiner,
    TemporalContextMiner,
    build_frame_pyramid,
    warp_bilinear,
)
from .motion import FlowNet, MotionAutoencoder, flow_pyramid


@dataclass
class ReconstructionBuffer:
    """What the next frame may reference: last reconstruction, its feature,
    and the recurrent chain state (None for the chain-free variant)."""

    x_hat: torch.Tensor
    feature: torch.Tensor
    chain: ChainState | None

    def detached(self) -> "ReconstructionBuffer":
        return ReconstructionBuffer(
            self.x_hat.detach(),
            self.feature.detach(),
            self.chain.detached() if self.chain is not None else None,
        )


class ContextEncoder(nn.Module):
    def __init__(self, ctx_widths: tuple[int, int, int], latent_channels: int):
        super().__init__()
        c1, c2, c3 = ctx_widths
        self.down1 = conv(3 + c1, c2, stride=2)
        self.res1 = ResidualBlock(c2)
        self.down2 = conv(c2 + c2, c3, stride=2)
        self.res2 = ResidualBlock(c3)
        self.down3 = conv(c3 + c3, c3, stride=2)
        self.down4 = conv(c3, latent_channels, stride=2)
        self.act = nn.LeakyReLU(0.1, inplace=True)

    def forward(self, x: torch.Tensor, ctx: ScaledPyramid) -> torch.Tensor:
        if x.shape[-2:] != ctx.level1.shape[-2:]:
            raise DimensionError("frame and context level 1 must align")
        h = self.res1(self.act(self.down1(torch.cat([x, ctx.level1], dim=1))))
        h = self.res2(self.act(self.down2(torch.cat([h, ctx.level2], dim=1))))
        h = self.act(self.down3(torch.cat([h, ctx.level3], dim=1)))
        return self.down4(h)


class ContextDecoder(nn.Module):
    """Synthesis transform plus frame generator."""

    def __init__(self, ctx_widths: tuple[int, int, int], latent_channels: int, feature_channels: int):
        super().__init__()
        c1, c2, c3 = ctx_widths
        self.up1 = deconv(latent_channels, c3)
        self.up2 = deconv(c3, c3)
        self.merge3 = conv(c3 + c3, c3, k=1)
        self.res3 = ResidualBlock(c3)
        self.up3 = deconv(c3, c2)
        self.merge2 = conv(c2 + c2, c2, k=1)
        self.res2 = ResidualBlock(c2)
        self.up4 = deconv(c2, c1)
        self.merge1 = conv(c1 + c1, c1)
        self.res1 = ResidualBlock(c1)
        self.recon_head = conv(c1, 3)
        self.feat_head = conv(c1, feature_channels)
        self.act = nn.LeakyReLU(0.1, inplace=True)
        # start reconstructions near mid-gray so the [0,1] clamp rarely binds early
        nn.init.constant_(self.recon_head.bias, 0.5)

    def forward(self, y_hat: torch.Tensor, ctx: ScaledPyramid) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.act(self.up2(self.act(self.up1(y_hat))))
        if h.shape[-2:] != ctx.level3.shape[-2:]:
            raise CorruptionError(
                f"latent grid {tuple(y_hat.shape[-2:])} inconsistent with context {tuple(ctx.level3.shape[-2:])}"
            )
        h = self.res3(self.merge3(torch.cat([h, ctx.level3], dim=1)))
        h = self.act(self.up3(h))
        h = self.res2(self.merge2(torch.cat([h, ctx.level2], dim=1)))
        h = self.act(self.up4(h))
        g = self.res1(self.merge1(torch.cat([h, ctx.level1], dim=1)))
        x_hat = torch.clamp(self.recon_head(g), 0.0, 1.0)
        return x_hat, self.feat_head(g)


class CodecModel(nn.Module):
    """All trainable parts of the codec, wired per the configured variant."""

    def __init__(self, cfg: CodecConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or CodecConfig()
        widths = cfg.ctx_channels
        self.flow_net = FlowNet(cfg.flow_net_channels)
        self.motion_ae = MotionAutoencoder(cfg.motion_latent_channels)
        self.motion_prior = MotionPrior(cfg.motion_latent_channels, cfg.hyper_channels, cfg.sigma_floor)
        self.feature_pyramid = FeaturePyramid(cfg.feature_channels, widths)
        self.temporal_miner = TemporalContextMiner(widths, cfg.chain_channels, use_hidden=cfg.use_chain)
        if cfg.use_chain:
            self.chain = ReferenceChain(cfg.chain_channels, cfg.feature_channels)
            self.hidden_pyramid = HiddenPyramid(cfg.chain_channels)
        if cfg.use_spatial_fusion:
            self.spatial_miner = SpatialContextMiner(widths, cfg.chain_channels, use_hidden=cfg.use_chain)
            self.fusion = InceptionFusion(widths)
        self.ctx_encoder = ContextEncoder(widths, cfg.frame_latent_channels)
        self.ctx_decoder = ContextDecoder(widths, cfg.frame_latent_channels, cfg.feature_channels)
        self.context_prior = ContextPrior(
            cfg.frame_latent_channels, cfg.hyper_channels, widths[2], cfg.sigma_floor
        )
        self.intra_feature = ConvStack([3, cfg.feature_channels, cfg.feature_channels])

    # ---- buffer -----------------------------------------------------------

    def intra_reconstruct(self, x: torch.Tensor) -> torch.Tensor:
        """Default pluggable intra codec: store the padded frame at 8 bits."""
        return torch.round(x * 255.0) / 255.0

    def intra_buffer(self, x_hat: torch.Tensor) -> ReconstructionBuffer:
        feature = self.intra_feature(x_hat)
        chain = None
        if self.cfg.use_chain:
            b, _, h, w = x_hat.shape
            state = self.chain.init_state(h, w, batch=b, dtype=x_hat.dtype, device=x_hat.device)
            chain = self.chain.advance(x_hat, feature, state)
        return ReconstructionBuffer(x_hat, feature, chain)

    def update_buffer(
        self, buf: ReconstructionBuffer, x_hat: torch.Tensor, feature: torch.Tensor
    ) -> ReconstructionBuffer:
        chain = self.chain.advance(x_hat, feature, buf.chain) if self.cfg.use_chain else None
        return ReconstructionBuffer(x_hat, feature, chain)

    # ---- context ----------------------------------------------------------

    def build_contexts(self, buf: ReconstructionBuffer, flows) -> ScaledPyramid:
        fpyr = self.feature_pyramid(buf.feature)
        ht_levels = self.hidden_pyramid(buf.chain.ht) if self.cfg.use_chain else None
        ct = self.temporal_miner(fpyr, flows, ht_levels)
        if not self.cfg.use_spatial_fusion:
            return ct
        xpyr = build_frame_pyramid(buf.x_hat)
        hs_levels = self.hidden_pyramid(buf.chain.hs) if self.cfg.use_chain else None
        cs = self.spatial_miner(xpyr, flows, hs_levels)
        return self.fusion(cs, ct)

    # ---- decoder-side steps (shared verbatim by the encoder) ---------------

    def motion_params(self, zm_hat: torch.Tensor, latent_hw: tuple[int, int]):
        return self.motion_prior.params_from_hyper(zm_hat, latent_hw)

    def motion_field_from(self, m_sym: torch.Tensor, mu_m: torch.Tensor) -> torch.Tensor:
        return self.motion_ae.decode(dequantize_symbols(m_sym, mu_m))

    def contexts_from_motion(self, buf: ReconstructionBuffer, v_hat: torch.Tensor) -> ScaledPyramid:
        return self.build_contexts(buf, flow_pyramid(v_hat))

    def context_params(self, zy_hat: torch.Tensor, ctx: ScaledPyramid, latent_hw: tuple[int, int]):
        return self.context_prior.params_from_hyper(zy_hat, ctx.level3, latent_hw)

    def frame_from(self, y_sym: torch.Tensor, mu_y: torch.Tensor, ctx: ScaledPyramid):
        return self.ctx_decoder(dequantize_symbols(y_sym, mu_y), ctx)

    # ---- quantized coding ops -----------------------------------------------

    def encode_motion(self, v: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Full-resolution field -> (motion symbols, hyper symbols)."""
        y_m = self.motion_ae.encode(v)
        zm_sym = quantize_symbols(self.motion_prior.encode_hyper(y_m))
        mu_m, _ = self.motion_params(zm_sym, y_m.shape[-2:])
        return quantize_symbols(y_m, mu_m), zm_sym

    def decode_motion(self, m_sym: torch.Tensor, zm_sym: torch.Tensor) -> torch.Tensor:
        """Symbols -> reconstructed field, identical in memory or off the wire."""
        mu_m, _ = self.motion_params(zm_sym, m_sym.shape[-2:])
        return self.motion_field_from(m_sym, mu_m)

    def encode_frame(self, x: torch.Tensor, ctx: ScaledPyramid) -> tuple[torch.Tensor, torch.Tensor]:
        """Frame conditioned on fused context -> (latent symbols, hyper symbols)."""
        y = self.ctx_encoder(x, ctx)
        zy_sym = quantize_symbols(self.context_prior.encode_hyper(y))
        mu_y, _ = self.context_params(zy_sym, ctx, y.shape[-2:])
        return quantize_symbols(y, mu_y), zy_sym

    def decode_frame(self, y_sym: torch.Tensor, zy_sym: torch.Tensor, ctx: ScaledPyramid):
        """Symbols + context -> (reconstruction in [0,1], buffer feature)."""
        mu_y, _ = self.context_params(zy_sym, ctx, y_sym.shape[-2:])
        return self.frame_from(y_sym, mu_y, ctx)

    # ---- whole-frame paths --------------------------------------------------

    @torch.no_grad()
    def reconstruct_inter(self, symbols: dict[str, torch.Tensor], buf: ReconstructionBuffer):
        """Decoder path: symbols + buffer -> reconstruction bundle."""
        m_sym, zm_sym = symbols["motion"], symbols["hyper_motion"]
        y_sym, zy_sym = symbols["context"], symbols["hyper_context"]
        mu_m, sigma_m = self.motion_params(zm_sym, m_sym.shape[-2:])
        v_hat = self.motion_field_from(m_sym, mu_m)
        ctx = self.contexts_from_motion(buf, v_hat)
        mu_y, sigma_y = self.context_params(zy_sym, ctx, y_sym.shape[-2:])
        x_hat, feature = self.frame_from(y_sym, mu_y, ctx)
        return {
            "x_hat": x_hat,
            "feature": feature,
            "v_hat": v_hat,
            "ctx": ctx,
            "mu_m": mu_m,
            "sigma_m": sigma_m,
            "mu_y": mu_y,
            "sigma_y": sigma_y,
        }

    @torch.no_grad()
    def code_inter(self, x: torch.Tensor, buf: ReconstructionBuffer):
        """Encoder path; the returned reconstruction is exactly the decoder's."""
        v = self.flow_net(x, buf.x_hat)
        m_sym, zm_sym = self.encode_motion(v)
        v_hat = self.decode_motion(m_sym, zm_sym)
        ctx = self.contexts_from_motion(buf, v_hat)
        y_sym, zy_sym = self.encode_frame(x, ctx)
        symbols = {
            "motion": m_sym,
            "hyper_motion": zm_sym,
            "context": y_sym,
            "hyper_context": zy_sym,
        }
        recon = self.reconstruct_inter(symbols, buf)
        return symbols, recon

    def train_inter(self, x: torch.Tensor, buf: ReconstructionBuffer, motion_only: bool = False):
        """Differentiable path: uniform noise on the rate side, straight-through
        rounding on everything the decoders consume."""
        v = self.flow_net(x, buf.x_hat)
        y_m = self.motion_ae.encode(v)
        zm = self.motion_prior.encode_hyper(y_m)
        zm_hat = ste_round(zm)
        mu_m, sigma_m = self.motion_params(zm_hat, y_m.shape[-2:])
        v_hat = self.motion_ae.decode(ste_round(y_m, mu_m))
        bits_motion = bits_of_probability(
            gaussian_bin_probability(noisy_quantize(y_m, mu_m), 0.0, sigma_m)
        )
        bits_hyper_motion = bits_of_probability(
            self.motion_prior.hyper_prior.bin_probability(noisy_quantize(zm))
        )
        warped = warp_bilinear(buf.x_hat, v_hat)
        out = {
            "v": v,
            "v_hat": v_hat,
            "warped": warped,
            "bits_motion": bits_motion,
            "bits_hyper_motion": bits_hyper_motion,
        }
        if motion_only:
            return out

        ctx = self.contexts_from_motion(buf, v_hat)
        y = self.ctx_encoder(x, ctx)
        zy = self.context_prior.encode_hyper(y)
        zy_hat = ste_round(zy)
        mu_y, sigma_y = self.context_params(zy_hat, ctx, y.shape[-2:])
        x_hat, feature = self.ctx_decoder(ste_round(y, mu_y), ctx)
        out.update(
            ctx=ctx,
            x_hat=x_hat,
            feature=feature,
            bits_context=bits_of_probability(
                gaussian_bin_probability(noisy_quantize(y, mu_y), 0.0, sigma_y)
            ),
            bits_hyper_context=bits_of_probability(
                self.context_prior.hyper_prior.bin_probability(noisy_quantize(zy))
            ),
        )
        return out
