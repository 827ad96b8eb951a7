"""Metrics, BD-rate, the coding test protocol, heatmaps, ablation variants."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from scipy.interpolate import PchipInterpolator

from .codec import CodecModel
from .coding import FrameStats, decode_sequence, encode_sequence
from .config import LAMBDA_VALUES, CodecConfig
from .errors import CorruptionError, DimensionError
from .frameio import Frame

PSNR_CAP_DB = 100.0
MSSSIM_MIN_DIM = 160
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


@dataclass
class RDPoint:
    sequence: str
    lambda_index: int
    bpp: float
    psnr: float
    msssim: float | None
    frames: int
    intra_period: int


def psnr(a: Frame, b: Frame) -> float:
    """10*log10(1/MSE) over display-region RGB samples, capped at 100 dB."""
    if (a.display_height, a.display_width) != (b.display_height, b.display_width):
        raise DimensionError("frames must share display dimensions")
    pa = a.pixels[:, : a.display_height, : a.display_width].astype(np.float64)
    pb = b.pixels[:, : b.display_height, : b.display_width].astype(np.float64)
    mse = float(np.mean((pa - pb) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def sequence_psnr(ref: list[Frame], rec: list[Frame]) -> float:
    """Per-frame PSNRs averaged (not MSE-pooled)."""
    return float(np.mean([psnr(a, b) for a, b in zip(ref, rec)]))


def _gaussian_kernel(size: int = 11, sigma: float = 1.5, dtype=torch.float64) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype) - (size - 1) / 2.0
    g = torch.exp(-(coords**2) / (2 * sigma * sigma))
    g = g / g.sum()
    return (g[:, None] * g[None, :]).reshape(1, 1, size, size)


def _ssim_pair(x: torch.Tensor, y: torch.Tensor, kernel: torch.Tensor):
    c = x.shape[1]
    k = kernel.expand(c, 1, -1, -1)
    pad = kernel.shape[-1] // 2

    def blur(t):
        return F.conv2d(F.pad(t, (pad, pad, pad, pad), mode="reflect"), k, groups=c)

    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    c1, c2 = 0.01**2, 0.03**2
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return lum.mean(), cs.mean()


def msssim_tensor(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """5-scale MS-SSIM on (B, C, H, W) tensors in [0, 1]; differentiable."""
    if x.shape != y.shape:
        raise DimensionError("inputs must share shape")
    if min(x.shape[-2:]) < MSSSIM_MIN_DIM:
        raise DimensionError(
            f"MS-SSIM needs min dimension >= {MSSSIM_MIN_DIM}px for 5 scales, got {tuple(x.shape[-2:])}"
        )
    kernel = _gaussian_kernel(dtype=x.dtype).to(x.device)
    vals = []
    lum = None
    for i, _ in enumerate(MSSSIM_WEIGHTS):
        lum, cs = _ssim_pair(x, y, kernel)
        vals.append(torch.clamp(cs, min=0.0))
        if i < len(MSSSIM_WEIGHTS) - 1:
            x = F.avg_pool2d(x, 2)
            y = F.avg_pool2d(y, 2)
    vals[-1] = vals[-1] * torch.clamp(lum, min=0.0)
    out = torch.ones((), dtype=x.dtype, device=x.device)
    for v, w in zip(vals, MSSSIM_WEIGHTS):
        out = out * v**w
    return out


def msssim(a: Frame, b: Frame) -> float:
    if (a.display_height, a.display_width) != (b.display_height, b.display_width):
        raise DimensionError("frames must share display dimensions")
    xa = torch.from_numpy(a.pixels[:, : a.display_height, : a.display_width].astype(np.float64)).unsqueeze(0)
    xb = torch.from_numpy(b.pixels[:, : b.display_height, : b.display_width].astype(np.float64)).unsqueeze(0)
    return float(msssim_tensor(xa, xb).item())


def bd_rate(anchor: list[RDPoint] | list[tuple], test: list[RDPoint] | list[tuple], quality: str = "psnr") -> float:
    """Average rate difference (%) at equal quality; negative means savings.

    Quality vs log10(rate) is interpolated with a monotone piecewise cubic
    and integrated over the overlapping quality interval.
    """

    def unpack(points):
        if points and isinstance(points[0], RDPoint):
            pairs = [(getattr(p, quality), p.bpp) for p in points]
        else:
            pairs = [(q, r) for r, q in points]  # (rate, quality) tuples
        pairs.sort()
        q = np.array([p[0] for p in pairs], dtype=np.float64)
        r = np.log10([p[1] for p in pairs])
        if len(q) < 4:
            raise DimensionError("BD-rate needs at least 4 points per curve")
        if np.any(np.diff(q) <= 0):
            raise DimensionError("quality values must be strictly increasing")
        return q, r

    qa, ra = unpack(anchor)
    qt, rt = unpack(test)
    lo = max(qa.min(), qt.min())
    hi = min(qa.max(), qt.max())
    if hi <= lo:
        raise DimensionError("RD curves share no quality range")
    ia = PchipInterpolator(qa, ra)
    it = PchipInterpolator(qt, rt)
    avg = (it.integrate(lo, hi) - ia.integrate(lo, hi)) / (hi - lo)
    return float((10.0**avg - 1.0) * 100.0)


def context_heatmap(ctx_level1: torch.Tensor, expected_channels: int = 48) -> np.ndarray:
    """Channel-averaged, min-max-normalized map of the level-1 context."""
    t = ctx_level1
    if t.dim() == 4:
        t = t.squeeze(0)
    if t.dim() != 3 or t.shape[0] != expected_channels:
        raise DimensionError(f"expected {expected_channels}-channel context, got {tuple(t.shape)}")
    mean = t.detach().double().mean(dim=0).cpu().numpy()
    lo, hi = float(mean.min()), float(mean.max())
    if hi - lo <= 0:
        return np.zeros_like(mean)
    return (mean - lo) / (hi - lo)


def save_heatmap(heat: np.ndarray, path) -> None:
    Image.fromarray(np.round(heat * 255.0).astype(np.uint8), mode="L").save(path)


def build_variant(tag: str, **overrides) -> CodecModel:
    """Construct one of the ablation variants (Ma/Mb/Mc) or the full model."""
    return CodecModel(CodecConfig.for_variant(tag, **overrides))


CSV_FIELDS = ("sequence", "lambda", "bpp", "psnr_db", "msssim", "frames", "intra_period")


@dataclass
class ProtocolResult:
    points: list[RDPoint]
    frame_stats: dict[tuple[str, int], list[FrameStats]]
    csv: str
    summary: str


def run_test_protocol(
    sequences: list[tuple[str, list[Frame]]],
    models: dict[int, CodecModel],
    intra_period: int = 32,
    frame_count: int | None = None,
    verify: bool = True,
) -> ProtocolResult:
    """Code every sequence at every rate point with real entropy coding.

    Frames are padded to multiples of 16, the chain resets at every intra
    frame, and (by default) each stream is decoded back and checked against
    the encoder's reconstructions; a mismatch is a hard failure. Metrics are
    computed on the display region only.
    """
    from .bitstream import bpp_of

    points: list[RDPoint] = []
    all_stats: dict[tuple[str, int], list[FrameStats]] = {}
    lines = [",".join(CSV_FIELDS)]
    report = io.StringIO()
    report.write("coding protocol report\n")
    report.write(f"intra_period={intra_period}; PSNR convention: per-frame, then averaged\n")
    for name, frames in sequences:
        use = frames if frame_count is None else frames[:frame_count]
        for lam_idx, model in sorted(models.items()):
            data, stats, recons = encode_sequence(model, use, intra_period, lam_idx)
            if verify:
                _, dec_recons, dec_stats = decode_sequence(model, data)
                for i, (a, b) in enumerate(zip(stats, dec_stats)):
                    if a.recon_hash != b.recon_hash:
                        raise CorruptionError(
                            f"decode verification failed: frame {i} of {name!r} (lambda {lam_idx})"
                        )
            rec_frames = [
                Frame(r.squeeze(0).numpy(), use[0].display_height, use[0].display_width) for r in recons
            ]
            seq_psnr = sequence_psnr(use, rec_frames)
            ms = None
            if min(use[0].display_height, use[0].display_width) >= MSSSIM_MIN_DIM:
                ms = float(np.mean([msssim(a, b) for a, b in zip(use, rec_frames)]))
            bpp = bpp_of(data)
            pt = RDPoint(name, lam_idx, bpp, seq_psnr, ms, len(use), intra_period)
            points.append(pt)
            all_stats[(name, lam_idx)] = stats
            lines.append(
                f"{name},{LAMBDA_VALUES[lam_idx]:g},{bpp:.6f},{seq_psnr:.4f},"
                f"{'' if ms is None else f'{ms:.6f}'},{len(use)},{intra_period}"
            )
            report.write(f"\n{name} @ lambda={LAMBDA_VALUES[lam_idx]:g}: {bpp:.4f} bpp, {seq_psnr:.2f} dB\n")
            for st in stats:
                if st.frame_type == "P":
                    motion_b = st.segment_bytes["motion"] + st.segment_bytes["hyper_motion"]
                    ctx_b = st.segment_bytes["context"] + st.segment_bytes["hyper_context"]
                    report.write(
                        f"  frame {st.index:3d} P {st.record_bytes:6d} B"
                        f" (motion {motion_b} B, context {ctx_b} B)\n"
                    )
                else:
                    report.write(f"  frame {st.index:3d} I {st.record_bytes:6d} B\n")
    return ProtocolResult(points, all_stats, "\n".join(lines) + "\n", report.getvalue())


def parse_rd_csv(text: str) -> list[RDPoint]:
    rows = [r.strip() for r in text.strip().splitlines() if r.strip()]
    if rows and rows[0].startswith("sequence"):
        rows = rows[1:]
    points = []
    for row in rows:
        seq, lam, bpp, ps, ms, frames, ip = row.split(",")
        lam_idx = LAMBDA_VALUES.index(float(lam)) if float(lam) in LAMBDA_VALUES else -1
        points.append(
            RDPoint(seq, lam_idx, float(bpp), float(ps), float(ms) if ms else None, int(frames), int(ip))
        )
    return points
