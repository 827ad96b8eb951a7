import numpy as np
import pytest
import torch

from ctxcodec.config import CodecConfig
from ctxcodec.errors import CorruptionError, DimensionError
from ctxcodec.motion import FlowNet, MotionAutoencoder, flow_pyramid

from .gradcheck import module_gradient_check


def test_flow_pyramid_constant_field():
    flow = torch.zeros(1, 2, 64, 64)
    flow[:, 0] = 4.0
    flow[:, 1] = 2.0
    l1, l2, l3 = flow_pyramid(flow)
    assert l1.shape == (1, 2, 64, 64)
    assert torch.allclose(l2[:, 0], torch.full((1, 32, 32), 2.0))
    assert torch.allclose(l2[:, 1], torch.full((1, 32, 32), 1.0))
    assert torch.allclose(l3[:, 0], torch.full((1, 16, 16), 1.0))
    assert torch.allclose(l3[:, 1], torch.full((1, 16, 16), 0.5))


def test_flow_pyramid_zero():
    for lvl in flow_pyramid(torch.zeros(1, 2, 16, 16)):
        assert torch.count_nonzero(lvl) == 0


def test_flow_pyramid_matches_block_average_oracle(rng):
    flow = torch.from_numpy(rng.standard_normal((1, 2, 16, 16)).astype(np.float32))
    _, l2, _ = flow_pyramid(flow)
    oracle = flow.reshape(1, 2, 8, 2, 8, 2).mean(dim=(3, 5)) * 0.5
    assert torch.allclose(l2, oracle, atol=1e-6)


def test_flow_pyramid_rejects_odd_dims():
    with pytest.raises(DimensionError):
        flow_pyramid(torch.zeros(1, 2, 18, 16))


def test_flow_net_shape_and_determinism(rng):
    net = FlowNet(8)
    x = torch.from_numpy(rng.random((1, 3, 32, 32)).astype(np.float32))
    ref = torch.from_numpy(rng.random((1, 3, 32, 32)).astype(np.float32))
    f1 = net(x, ref)
    f2 = net(x, ref)
    assert f1.shape == (1, 2, 32, 32)
    assert torch.equal(f1, f2)
    assert torch.isfinite(f1).all()


def test_flow_net_dimension_mismatch():
    net = FlowNet(8)
    with pytest.raises(DimensionError):
        net(torch.zeros(1, 3, 32, 32), torch.zeros(1, 3, 32, 16))


def test_flow_net_gradient_check():
    torch.manual_seed(11)
    net = FlowNet(4).double()
    x = torch.rand(1, 3, 16, 16, dtype=torch.float64, requires_grad=True)
    ref = torch.rand(1, 3, 16, 16, dtype=torch.float64, requires_grad=True)
    proj = torch.randn(1, 2, 16, 16, dtype=torch.float64)

    def loss():
        return (net(x, ref) * proj).sum()

    err = module_gradient_check(net, loss, n_coords=5)
    assert err <= 1e-3, f"max relative parameter-gradient error {err}"
    from .gradcheck import fd_gradient_check

    err_in = fd_gradient_check(loss, [x, ref], n_coords=6, seed=4)
    assert err_in <= 1e-3, f"max relative input-gradient error {err_in}"


def test_motion_latent_grid_is_factor_16():
    ae = MotionAutoencoder(64)
    y = ae.encode(torch.zeros(1, 2, 256, 256))
    assert y.shape == (1, 64, 16, 16)


def test_zero_flow_encodes_finite(rng):
    ae = MotionAutoencoder(8, width=8)
    y = ae.encode(torch.zeros(1, 2, 32, 32))
    assert torch.isfinite(y).all()
    v = ae.decode(torch.round(y))
    assert v.shape == (1, 2, 32, 32)
    assert torch.isfinite(v).all()


def test_round_trip_on_smooth_flows(rng):
    ae = MotionAutoencoder(8, width=8)
    base = torch.from_numpy(rng.standard_normal((1, 2, 4, 4)).astype(np.float32))
    flow = torch.nn.functional.interpolate(base, scale_factor=8, mode="bilinear", align_corners=False)
    v = ae.decode(ae.encode(flow))
    assert v.shape == flow.shape
    assert torch.isfinite(v).all()


def test_decode_rejects_channel_mismatch():
    ae = MotionAutoencoder(8, width=8)
    with pytest.raises(CorruptionError):
        ae.decode(torch.zeros(1, 9, 4, 4))


def test_motion_symbols_round_trip_through_real_coder(tiny_cfg, rng):
    # quantized motion latents survive the rANS coder exactly
    from ctxcodec import rans
    from ctxcodec.entropy import (
        MotionPrior,
        build_cdf,
        indices_to_symbols,
        quantize_symbols,
        symbols_to_indices,
    )

    ae = MotionAutoencoder(tiny_cfg.motion_latent_channels, width=8)
    prior = MotionPrior(tiny_cfg.motion_latent_channels, tiny_cfg.hyper_channels, 0.04)
    flow = torch.from_numpy(rng.standard_normal((1, 2, 32, 32)).astype(np.float32)) * 3
    with torch.no_grad():
        y = ae.encode(flow)
        z_sym = quantize_symbols(prior.encode_hyper(y))
        mu, sigma = prior.params_from_hyper(z_sym, y.shape[-2:])
        m_sym = quantize_symbols(y, mu)

    indices = symbols_to_indices(m_sym.numpy())
    tables = build_cdf(np.zeros(indices.size), sigma.detach().numpy())
    stream = rans.range_encode(indices, np.arange(indices.size), tables)
    back = rans.range_decode(stream, np.arange(indices.size), tables)
    assert np.array_equal(indices_to_symbols(back), m_sym.numpy().reshape(-1).astype(np.int64))
