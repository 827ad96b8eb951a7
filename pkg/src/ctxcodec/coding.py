"""Sequence coding sessions: real entropy coding against the container format.

The decoder here is a state machine over (header, records) only; the encoder
produces its reconstructions by running the identical decoder-side steps, so
the two sides agree bit for bit on one platform.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import torch

from . import bitstream, rans
from .bitstream import InterRecord, IntraRecord, StreamHeader
from .codec import CodecModel
from .entropy import RateEstimate, build_cdf, indices_to_symbols, symbols_to_indices
from .errors import CorruptionError, DimensionError
from .frameio import Frame, crop_to_display, pad_to_multiple16


def frame_to_tensor(frame: Frame, dtype=torch.float32) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(frame.pixels)).to(dtype).unsqueeze(0)


def tensor_to_frame(x: torch.Tensor, display_h: int, display_w: int) -> Frame:
    arr = x.detach().squeeze(0).cpu().numpy().astype(np.float32)
    return Frame(arr, display_h, display_w)


def frame_schedule(frame_count: int, intra_period: int) -> list[bool]:
    """True where a frame is intra-coded."""
    if intra_period < 1:
        raise DimensionError("intra period must be >= 1")
    return [t % intra_period == 0 for t in range(frame_count)]


def latent_grid(height: int, width: int) -> tuple[int, int]:
    """Main-latent grid for padded frame dims."""
    return height // 16, width // 16


def hyper_grid(height: int, width: int) -> tuple[int, int]:
    lh, lw = latent_grid(height, width)
    return -(-lh // 4), -(-lw // 4)


@dataclass
class FrameStats:
    index: int
    frame_type: str
    record_bytes: int
    segment_bytes: dict[str, int] = field(default_factory=dict)
    estimate_bits: dict[str, float] = field(default_factory=dict)
    recon_hash: str = ""

    @property
    def payload_bits(self) -> int:
        return self.record_bytes * 8

    @property
    def total_estimate_bits(self) -> float:
        return sum(self.estimate_bits.values())

    def rate_estimate(self) -> RateEstimate:
        known = {k: v for k, v in self.estimate_bits.items() if k in bitstream.SEGMENT_NAMES}
        extra = {k: v for k, v in self.estimate_bits.items() if k not in bitstream.SEGMENT_NAMES}
        return RateEstimate(**known, breakdown_extra=extra)


def _hash_recon(x_hat: torch.Tensor) -> str:
    arr = x_hat.detach().squeeze(0).cpu().numpy().astype(np.float32)
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def _channel_contexts(shape: tuple[int, ...]) -> np.ndarray:
    _, c, h, w = shape
    return np.repeat(np.arange(c, dtype=np.int64), h * w)


def _encode_gaussian(sym: torch.Tensor, sigma: torch.Tensor) -> tuple[bytes, float]:
    indices = symbols_to_indices(sym.cpu().numpy())
    tables = build_cdf(np.zeros(indices.size), sigma.detach().cpu().numpy())
    contexts = np.arange(indices.size)
    data = rans.range_encode(indices, contexts, tables)
    return data, rans.table_bits(indices, contexts, tables)


def _decode_gaussian(data: bytes, sigma: torch.Tensor, shape) -> tuple[torch.Tensor, float]:
    tables = build_cdf(np.zeros(int(np.prod(shape))), sigma.detach().cpu().numpy())
    contexts = np.arange(tables.shape[0])
    indices = rans.range_decode(data, contexts, tables, expected=tables.shape[0])
    bits = rans.table_bits(indices, contexts, tables)
    sym = torch.from_numpy(indices_to_symbols(indices)).to(torch.float32).reshape(shape)
    return sym, bits


def _encode_factorized(sym: torch.Tensor, prior) -> tuple[bytes, float]:
    indices = symbols_to_indices(sym.cpu().numpy())
    tables = prior.cdf_tables()
    contexts = _channel_contexts(sym.shape)
    data = rans.range_encode(indices, contexts, tables)
    return data, rans.table_bits(indices, contexts, tables)


def _decode_factorized(data: bytes, prior, shape) -> tuple[torch.Tensor, float]:
    tables = prior.cdf_tables()
    contexts = _channel_contexts(shape)
    indices = rans.range_decode(data, contexts, tables, expected=contexts.size)
    bits = rans.table_bits(indices, contexts, tables)
    sym = torch.from_numpy(indices_to_symbols(indices)).to(torch.float32).reshape(shape)
    return sym, bits


def _intra_record(x_hat: torch.Tensor) -> IntraRecord:
    arr = (x_hat.squeeze(0) * 255.0).round().clamp(0, 255).to(torch.uint8)
    return IntraRecord(arr.permute(1, 2, 0).contiguous().cpu().numpy().tobytes())


def _intra_reconstruction(rec: IntraRecord, height: int, width: int) -> torch.Tensor:
    expected = height * width * 3
    if len(rec.rgb8) != expected:
        raise CorruptionError(f"intra payload holds {len(rec.rgb8)} bytes, expected {expected}")
    arr = np.frombuffer(rec.rgb8, dtype=np.uint8).reshape(height, width, 3)
    return torch.from_numpy(arr.transpose(2, 0, 1).copy()).float().unsqueeze(0) / 255.0


@torch.no_grad()
def encode_sequence(
    model: CodecModel,
    frames: list[Frame],
    intra_period: int = 32,
    lambda_index: int = 3,
) -> tuple[bytes, list[FrameStats], list[torch.Tensor]]:
    """Code display-sized frames into a container; returns stats and the
    encoder-side reconstructions (padded)."""
    model.eval()
    if not frames:
        raise DimensionError("nothing to encode")
    padded = [pad_to_multiple16(f) for f in frames]
    h, w = padded[0].height, padded[0].width
    dh, dw = frames[0].display_height, frames[0].display_width
    for f in padded:
        if (f.height, f.width) != (h, w) or (f.display_height, f.display_width) != (dh, dw):
            raise DimensionError("all frames must share dimensions")

    header = StreamHeader(w, h, dw, dh, len(frames), lambda_index)
    records: list[bitstream.Record] = []
    stats: list[FrameStats] = []
    recons: list[torch.Tensor] = []
    buf = None
    for t, (is_intra, frame) in enumerate(zip(frame_schedule(len(frames), intra_period), padded)):
        x = frame_to_tensor(frame)
        if is_intra:
            x_hat = model.intra_reconstruct(x)
            rec = _intra_record(x_hat)
            buf = model.intra_buffer(x_hat)
            st = FrameStats(t, "I", record_bytes=1 + 4 + rec.payload_bytes)
            st.estimate_bits["intra"] = rec.payload_bytes * 8.0
        else:
            symbols, recon = model.code_inter(x, buf)
            seg_hm, bits_hm = _encode_factorized(symbols["hyper_motion"], model.motion_prior.hyper_prior)
            seg_m, bits_m = _encode_gaussian(symbols["motion"], recon["sigma_m"])
            seg_hc, bits_hc = _encode_factorized(symbols["hyper_context"], model.context_prior.hyper_prior)
            seg_c, bits_c = _encode_gaussian(symbols["context"], recon["sigma_y"])
            rec = InterRecord((seg_hm, seg_m, seg_hc, seg_c))
            x_hat = recon["x_hat"]
            buf = model.update_buffer(buf, x_hat, recon["feature"])
            st = FrameStats(t, "P", record_bytes=1 + 4 * 4 + rec.payload_bytes)
            st.segment_bytes = dict(zip(bitstream.SEGMENT_NAMES, (len(s) for s in rec.segments)))
            st.estimate_bits = {
                "hyper_motion": bits_hm,
                "motion": bits_m,
                "hyper_context": bits_hc,
                "context": bits_c,
            }
        st.recon_hash = _hash_recon(x_hat)
        stats.append(st)
        records.append(rec)
        recons.append(x_hat)
    return bitstream.write_sequence(header, records), stats, recons


@torch.no_grad()
def decode_sequence(model: CodecModel, data: bytes) -> tuple[StreamHeader, list[torch.Tensor], list[FrameStats]]:
    """Rebuild reconstructions from a container alone."""
    model.eval()
    header, records = bitstream.read_sequence(data)
    h, w = header.height, header.width
    if h % 16 or w % 16:
        raise CorruptionError(f"padded dims {w}x{h} not multiples of 16")
    lat_hw = latent_grid(h, w)
    hyp_hw = hyper_grid(h, w)
    cfg = model.cfg
    recons: list[torch.Tensor] = []
    stats: list[FrameStats] = []
    buf = None
    for t, rec in enumerate(records):
        if isinstance(rec, IntraRecord):
            x_hat = _intra_reconstruction(rec, h, w)
            buf = model.intra_buffer(x_hat)
            st = FrameStats(t, "I", record_bytes=1 + 4 + rec.payload_bytes)
        else:
            if buf is None:
                raise CorruptionError(f"inter frame {t} before any intra frame")
            seg_hm, seg_m, seg_hc, seg_c = rec.segments
            zm_shape = (1, cfg.hyper_channels, *hyp_hw)
            zm_sym, bits_hm = _decode_factorized(seg_hm, model.motion_prior.hyper_prior, zm_shape)
            mu_m, sigma_m = model.motion_params(zm_sym, lat_hw)
            m_shape = (1, cfg.motion_latent_channels, *lat_hw)
            m_sym, bits_m = _decode_gaussian(seg_m, sigma_m, m_shape)
            v_hat = model.motion_field_from(m_sym, mu_m)
            ctx = model.contexts_from_motion(buf, v_hat)
            zy_shape = (1, cfg.hyper_channels, *hyp_hw)
            zy_sym, bits_hc = _decode_factorized(seg_hc, model.context_prior.hyper_prior, zy_shape)
            mu_y, sigma_y = model.context_params(zy_sym, ctx, lat_hw)
            y_shape = (1, cfg.frame_latent_channels, *lat_hw)
            y_sym, bits_c = _decode_gaussian(seg_c, sigma_y, y_shape)
            x_hat, feature = model.frame_from(y_sym, mu_y, ctx)
            buf = model.update_buffer(buf, x_hat, feature)
            st = FrameStats(t, "P", record_bytes=1 + 4 * 4 + rec.payload_bytes)
            st.segment_bytes = dict(zip(bitstream.SEGMENT_NAMES, (len(s) for s in rec.segments)))
            st.estimate_bits = {
                "hyper_motion": bits_hm,
                "motion": bits_m,
                "hyper_context": bits_hc,
                "context": bits_c,
            }
        st.recon_hash = _hash_recon(x_hat)
        recons.append(x_hat)
        stats.append(st)
    return header, recons, stats


def decoded_display_frames(header: StreamHeader, recons: list[torch.Tensor]) -> list[Frame]:
    out = []
    for x_hat in recons:
        padded = tensor_to_frame(x_hat, header.display_height, header.display_width)
        out.append(crop_to_display(padded))
    return out
