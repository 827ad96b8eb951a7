import numpy as np
import pytest
import torch

from ctxcodec.config import CodecConfig

torch.set_num_threads(1)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


@pytest.fixture
def tiny_cfg():
    """Shrunk widths: same wiring, cheap finite-difference checks."""
    return CodecConfig(
        chain_channels=6,
        feature_channels=8,
        ctx_channels=(8, 12, 16),
        motion_latent_channels=8,
        frame_latent_channels=12,
        hyper_channels=8,
        flow_net_channels=8,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def synthetic_frame(h, w, t=0, seed=0):
    """Smooth moving pattern, 8-bit quantized, values well inside [0,1]."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    g = np.random.default_rng(seed)
    ph = g.uniform(0, 6.28, size=3)
    r = 0.5 + 0.35 * np.sin((xx + 2.0 * t) / 7.0 + ph[0]) * np.cos((yy - 1.0 * t) / 9.0)
    gch = 0.5 + 0.35 * np.cos((xx - 1.5 * t) / 11.0 + ph[1]) * np.sin((yy + 2.5 * t) / 6.0)
    b = 0.5 + 0.35 * np.sin((xx + yy + 3.0 * t) / 13.0 + ph[2])
    arr = np.stack([r, gch, b]).clip(0.0, 1.0)
    return np.round(arr * 255.0).astype(np.float32) / 255.0
