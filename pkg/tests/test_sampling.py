import io

import numpy as np
import pytest

from mscgm.core import Rng
from mscgm.data import PairedDataset
from mscgm.errors import ContractViolationError, InvalidShapeError
from mscgm.nn import DiscriminatorConfig, GeneratorConfig, UNetConfig, build_eps_unet
from mscgm.sampling import (SampleTrace, eps_network_from_checkpoint, full_resolution_diffusion,
                            generators_from_checkpoint, sample_full, write_trace_csv)
from mscgm.stats import psnr
from mscgm.synthetic import shapes_image
from mscgm.train import TrainConfig, train_bbdp, train_msgan

TINY = dict(unet=UNetConfig(base=8, groups=2, heads=2, temb_dim=16),
            generator=GeneratorConfig(base=8, groups=2),
            discriminator=DiscriminatorConfig(base=4, dense=8),
            dtype="float64")


class OracleEps:
    """Stands in for the network: returns the exact offset x_t - x0 for a known x0 low band."""

    dtype = np.dtype(np.float64)

    def __init__(self, x0_ll):
        self.x0_ll = x0_ll

    def __call__(self, x_t, y, t):
        return x_t - self.x0_ll


class ZeroGenerator:
    dtype = np.dtype(np.float64)
    meta = {"config": {"noise_channels": 1, "scale_channel": True}}

    def __call__(self, x_l, y_h, z, scale):
        return np.zeros_like(y_h)


def image(size=16, seed=0):
    x = shapes_image(size, Rng(seed))
    return x[..., None] if x.ndim == 2 else x


@pytest.fixture(scope="module")
def identity_ckpts():
    x = image()[None]
    ds = PairedDataset(x.copy(), x.copy())
    cfg = TrainConfig(levels=2, T=50, bbdp_steps=300, bbdp_batch=8, lr_bbdp=2e-3, gan_steps=100, gan_batch=4,
                      lr_g=1e-3, ema_rate=0.9, **TINY)
    return train_bbdp(ds, cfg), train_msgan(ds, cfg), x[0]


@pytest.fixture(scope="module")
def long_chain_ckpts():
    x = image(8, 1)[None]
    cfg = TrainConfig(levels=1, T=1000, bbdp_steps=0, gan_steps=0, **TINY)
    ds = PairedDataset(x, x)
    return train_bbdp(ds, cfg), train_msgan(ds, cfg)


class TestSampleFull:
    def test_identity_overfit(self, identity_ckpts):
        b, g, x = identity_ckpts
        assert psnr(sample_full(b, g, x, rng=Rng(3)), x, max_val=2.0) >= 30.0

    @pytest.mark.parametrize("n_steps", [4, 16, 64, 256, 1000])
    def test_step_counts(self, long_chain_ckpts, n_steps):
        b, g = long_chain_ckpts
        trace = SampleTrace()
        out = sample_full(b, g, image(8, 2), n_steps=n_steps, rng=Rng(0), trace=trace)
        assert out.shape == (8, 8, 1)
        assert len(trace.diffusion_pixels) == n_steps and trace.grid[0] == 1000 and trace.grid[-1] == 1

    @pytest.mark.parametrize("size", [8, 16, 24])
    def test_shape_law_batched(self, identity_ckpts, size):
        b, g, _ = identity_ckpts
        y = np.stack([image(size, s) for s in range(3)])
        out = sample_full(b, g, y, n_steps=3, rng=Rng(0))
        assert out.shape == y.shape and out.min() >= -1 and out.max() <= 1

    def test_constant_in_constant_out(self, identity_ckpts):
        b, g, _ = identity_ckpts
        y = np.full((16, 16, 1), 0.3)
        x0_ll = np.full((1, 1, 4, 4), 0.3 * 4)  # two orthonormal Haar levels scale a constant by 4
        out = sample_full(b, g, y, rng=Rng(0), eps_net=OracleEps(x0_ll), generators=[ZeroGenerator()])
        assert np.ptp(out) <= 1e-12
        assert out[0, 0, 0] == pytest.approx(0.3, abs=1e-12)

    def test_seed_determinism(self, identity_ckpts):
        b, g, x = identity_ckpts
        a = sample_full(b, g, x, n_steps=5, rng=Rng(9))
        c = sample_full(b, g, x, n_steps=5, rng=Rng(9))
        assert a.tobytes() == c.tobytes()

    def test_indivisible(self, identity_ckpts):
        b, g, _ = identity_ckpts
        with pytest.raises(InvalidShapeError, match="divisible by 2\\^2"):
            sample_full(b, g, np.zeros((10, 12, 1)))

    def test_channel_mismatch(self, identity_ckpts):
        b, g, _ = identity_ckpts
        with pytest.raises(ContractViolationError):
            sample_full(b, g, np.zeros((16, 16, 3)))

    def test_incompatible_checkpoints(self, identity_ckpts, long_chain_ckpts):
        with pytest.raises(ContractViolationError, match="levels"):
            sample_full(identity_ckpts[0], long_chain_ckpts[1], np.zeros((16, 16, 1)))

    def test_wrong_kind(self, identity_ckpts):
        b, g, _ = identity_ckpts
        with pytest.raises(ContractViolationError):
            eps_network_from_checkpoint(g)
        with pytest.raises(ContractViolationError):
            generators_from_checkpoint(b)


class TestCostLaw:
    @pytest.mark.parametrize("levels,size", [(1, 16), (2, 16), (3, 32)])
    def test_pixel_ratio_exact(self, levels, size):
        x = image(size)[None]
        cfg = TrainConfig(levels=levels, T=20, bbdp_steps=0, gan_steps=0, **TINY)
        ds = PairedDataset(x, x)
        b, g = train_bbdp(ds, cfg), train_msgan(ds, cfg)
        tr, full = SampleTrace(), SampleTrace()
        sample_full(b, g, x[0], n_steps=7, trace=tr)
        net = build_eps_unet(UNetConfig(base=8, groups=2, heads=2, temb_dim=16)).astype(np.float64)
        full_resolution_diffusion(net, x[0], 7, 20, trace=full)
        assert len(tr.diffusion_pixels) == len(full.diffusion_pixels) == 7
        for a, c in zip(tr.diffusion_pixels, full.diffusion_pixels):
            assert a * 4**levels == c

    def test_trace_csv(self, identity_ckpts):
        b, g, x = identity_ckpts
        tr = SampleTrace()
        sample_full(b, g, x, n_steps=4, trace=tr)
        buf = io.StringIO()
        write_trace_csv(tr, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "kind,name,value"
        assert lines[-1] == "diffusion_pixels_total,all,64"
        assert sum(l.startswith("diffusion_pixels,") for l in lines) == 4
        assert any(l.startswith("stage_seconds,diffusion,") for l in lines)
