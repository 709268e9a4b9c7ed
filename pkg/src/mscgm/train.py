"""Training loops: the bridge predictor on the coarsest LL band and the subband GAN."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bbdp
from .checkpoint import Checkpoint, config_hash
from .core import Rng
from .data import PairedDataset
from .errors import InvalidArgumentError, TrainingDivergenceError
from .losses import gradient_penalty, mse_loss, recon_loss, ssim_loss
from .nn import (DiscriminatorConfig, GeneratorConfig, OptimizerConfig, UNetConfig, adamw_step,
                 build_discriminator, build_eps_unet, build_generator, ema_update)
from .wavelet import decompose

_NESTED = {"unet": UNetConfig, "generator": GeneratorConfig, "discriminator": DiscriminatorConfig}


@dataclass(frozen=True)
class TrainConfig:
    levels: int = 2
    T: int = 1000
    bbdp_steps: int = 1000
    bbdp_batch: int = 16
    gan_steps: int = 1000
    gan_batch: int = 16
    n_critic: int = 1
    lambda_l1: float = 20.0
    nu_ssim: float = 0.5
    alpha_adv: float = 0.1
    recon: str = "l1"
    ssim_max_val: float = 2.0
    lr_bbdp: float = 1e-4
    lr_g: float = 1e-4
    lr_d: float = 1e-5
    weight_decay: float = 0.0
    ema_rate: float = 0.999
    gp_weight: float = 10.0
    shared_generator: bool = True
    checkpoint_every: int = 0
    seed: int = 0
    dtype: str = "float32"
    unet: UNetConfig = field(default_factory=UNetConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)

    def __post_init__(self):
        if self.levels < 1:
            raise InvalidArgumentError(f"levels must be >= 1, got {self.levels}")
        if self.T < 2:
            raise InvalidArgumentError(f"T must be >= 2, got {self.T}")
        for name in ("lambda_l1", "nu_ssim", "alpha_adv", "gp_weight", "weight_decay"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")
        for name in ("bbdp_steps", "gan_steps", "checkpoint_every"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")
        if self.bbdp_batch < 1 or self.gan_batch < 1:
            raise InvalidArgumentError("batch sizes must be >= 1")
        if self.alpha_adv > 0 and self.n_critic < 1:
            raise InvalidArgumentError("adversarial training needs n_critic >= 1 critic updates per generator step")
        if self.n_critic < 0:
            raise InvalidArgumentError("n_critic must be >= 0")
        if self.recon not in ("l1", "l2"):
            raise InvalidArgumentError(f"recon must be 'l1' or 'l2', got {self.recon!r}")
        if not 0.0 <= self.ema_rate <= 1.0:
            raise InvalidArgumentError("ema_rate must lie in [0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise InvalidArgumentError(f"dtype must be float32 or float64, got {self.dtype!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys {sorted(unknown)}")
        for key, typ in _NESTED.items():
            if key in d and isinstance(d[key], dict):
                sub_known = {f.name for f in dataclasses.fields(typ)}
                bad = set(d[key]) - sub_known
                if bad:
                    raise InvalidArgumentError(f"unknown {key} config keys {sorted(bad)}")
                d[key] = typ(**d[key])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def to_nchw(x):
    return np.ascontiguousarray(np.moveaxis(np.asarray(x), -1, 1))


def to_nhwc(x):
    return np.ascontiguousarray(np.moveaxis(np.asarray(x), 1, -1))


def detail_stack(bands) -> np.ndarray:
    """(N, h, w, C) lh/hl/hh -> (N, 3C, h, w) in lh, hl, hh channel order."""
    return np.concatenate([to_nchw(bands.lh), to_nchw(bands.hl), to_nchw(bands.hh)], axis=1)


def split_details(stack, channels):
    """Inverse of :func:`detail_stack` back to three (N, h, w, C) arrays."""
    c = channels
    return tuple(to_nhwc(stack[:, i * c:(i + 1) * c]) for i in range(3))


def scale_map(k, levels, shape, dtype):
    return np.full(shape, k / levels, dtype=dtype)


def write_loss_log(rows, fh=None) -> str:
    """CSV ``step,loss[,loss_G,loss_D,gp]`` from a list of dicts."""
    if not rows:
        return ""
    cols = ["step", "loss"] + [c for c in ("loss_G", "loss_D", "gp") if c in rows[0]]
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([r["step"]] + [repr(float(r[c])) for c in cols[1:]])
    return buf.getvalue() if fh is None else ""


def _check_dataset(dataset: PairedDataset, cfg: TrainConfig):
    if dataset is None or len(dataset) == 0:
        raise InvalidArgumentError("training needs a non-empty dataset")
    dataset.check_levels(cfg.levels)


def _diverged(what, step, value, extra=""):
    raise TrainingDivergenceError(f"{what}: non-finite loss {value} at step {step}{extra}")


# ---------------------------------------------------------------------------
# bridge predictor
# ---------------------------------------------------------------------------


def bbdp_networks(cfg: TrainConfig, channels: int):
    net = build_eps_unet(dataclasses.replace(cfg.unet, channels=channels))
    return net.astype(np.dtype(cfg.dtype))


def train_bbdp(dataset: PairedDataset, cfg: TrainConfig, log: list | None = None, on_checkpoint=None,
               net=None) -> Checkpoint:
    """Regress the bridge offset on (x_L^S, y_L^S) with MSE; AdamW + EMA."""
    _check_dataset(dataset, cfg)
    dtype = np.dtype(cfg.dtype)
    channels = dataset.image_shape[-1]
    sched = bbdp.make_schedule(cfg.T)
    x_ll = to_nchw(decompose(dataset.x0, cfg.levels).coarse_ll).astype(dtype)
    y_ll = to_nchw(decompose(dataset.y, cfg.levels).coarse_ll).astype(dtype)
    if net is None:
        net = bbdp_networks(cfg, channels)
    opt = OptimizerConfig(learning_rate=cfg.lr_bbdp, weight_decay=cfg.weight_decay)
    rng = Rng(cfg.seed).spawn(101)
    log = [] if log is None else log
    n, b = x_ll.shape[0], cfg.bbdp_batch
    for step in range(1, cfg.bbdp_steps + 1):
        idx = rng.integers(0, n, b)
        t = rng.integers(1, cfg.T + 1, b)
        eps = rng.randn((b,) + x_ll.shape[1:], dtype=dtype)
        x0, y = x_ll[idx], y_ll[idx]
        xt = bbdp.forward_sample(sched, x0, y, t, eps).astype(dtype)
        target = bbdp.training_target(sched, x0, y, t, eps)
        net.zero_grad()
        pred = net(xt, y, t)
        loss, grad = mse_loss(pred, target)
        if not np.isfinite(loss):
            _diverged("train_bbdp", step, loss, f" (timesteps {t.tolist()})")
        net.backward(grad.astype(dtype))
        adamw_step(net, opt)
        ema_update(net, cfg.ema_rate)
        log.append({"step": step, "loss": loss})
        if on_checkpoint and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            on_checkpoint(bbdp_checkpoint(net, cfg, step, channels))
    return bbdp_checkpoint(net, cfg, cfg.bbdp_steps, channels)


def bbdp_checkpoint(net, cfg: TrainConfig, step, channels) -> Checkpoint:
    meta = {"kind": "bbdp", "step": int(step), "channels": int(channels), "levels": cfg.levels,
            "T": cfg.T, "dtype": cfg.dtype, "unet": net.meta["config"], "train": cfg.to_dict(),
            "config_hash": config_hash(cfg.to_dict())}
    return Checkpoint(net.state_dict("eps/"), meta)


# ---------------------------------------------------------------------------
# multi-scale subband GAN
# ---------------------------------------------------------------------------


def gan_networks(cfg: TrainConfig, channels: int):
    """(generators, critics): one shared pair, or one pair per scale (index k - 1)."""
    dtype = np.dtype(cfg.dtype)
    count = 1 if cfg.shared_generator else cfg.levels
    gens, crits = [], []
    for i in range(count):
        g = dataclasses.replace(cfg.generator, channels=channels, seed=cfg.generator.seed + 17 * i)
        d = dataclasses.replace(cfg.discriminator, channels=channels, seed=cfg.discriminator.seed + 17 * i)
        gens.append(build_generator(g).astype(dtype))
        crits.append(build_discriminator(d).astype(dtype))
    return gens, crits


def generator_inputs(gen, x_l, y_h, k, levels, rng: Rng):
    """Keyword inputs for ``gen`` at scale k; x_l (N, C, h, w), y_h (N, 3C, h, w)."""
    cfg = gen.meta["config"]
    n, _, h, w = x_l.shape
    kw = {"x_l": x_l, "y_h": y_h}
    if cfg["noise_channels"]:
        kw["z"] = rng.randn((n, cfg["noise_channels"], h, w), dtype=x_l.dtype)
    if cfg["scale_channel"]:
        kw["scale"] = scale_map(k, levels, (n, 1, h, w), x_l.dtype)
    return kw


def _critic_input(crit, x_h, k, levels):
    if crit.meta["config"]["scale_channel"]:
        n, _, h, w = x_h.shape
        return np.concatenate([x_h, scale_map(k, levels, (n, 1, h, w), x_h.dtype)], axis=1)
    return x_h


def train_msgan(dataset: PairedDataset, cfg: TrainConfig, log: list | None = None, on_checkpoint=None,
                nets=None) -> Checkpoint:
    """Teacher-forced multi-scale detail synthesis with a gradient-penalized critic.

    Generator step ``k`` cycles S, S-1, ..., 1.  With ``alpha_adv = 0`` the
    critic is skipped entirely and training is plain subband regression.
    """
    _check_dataset(dataset, cfg)
    dtype = np.dtype(cfg.dtype)
    S = cfg.levels
    channels = dataset.image_shape[-1]
    px, py = decompose(dataset.x0, S), decompose(dataset.y, S)
    data = {}
    for k in range(1, S + 1):
        xd, yd = px.detail(k), py.detail(k)
        data[k] = (to_nchw(xd.ll).astype(dtype), detail_stack(yd).astype(dtype), detail_stack(xd).astype(dtype))
    gens, crits = nets if nets is not None else gan_networks(cfg, channels)
    opt_g = OptimizerConfig(learning_rate=cfg.lr_g, weight_decay=cfg.weight_decay)
    opt_d = OptimizerConfig(learning_rate=cfg.lr_d, weight_decay=cfg.weight_decay)
    rng = Rng(cfg.seed).spawn(202)
    log = [] if log is None else log
    n, b = len(dataset), cfg.gan_batch
    adversarial = cfg.alpha_adv > 0
    for step in range(1, cfg.gan_steps + 1):
        k = S - (step - 1) % S
        gen = gens[0 if cfg.shared_generator else k - 1]
        crit = crits[0 if cfg.shared_generator else k - 1]
        x_l, y_h, x_h = data[k]
        loss_d = gp = 0.0
        if adversarial:
            for _ in range(cfg.n_critic):
                idx = rng.integers(0, n, b)
                fake = gen(**generator_inputs(gen, x_l[idx], y_h[idx], k, S, rng))
                real = x_h[idx]
                crit.zero_grad()
                d_fake = crit(_critic_input(crit, fake, k, S))
                crit.backward(np.full_like(d_fake, 1.0 / b))
                d_real = crit(_critic_input(crit, real, k, S))
                crit.backward(np.full_like(d_real, -1.0 / b))
                mix = rng.uniform((b, 1, 1, 1)).astype(dtype)
                x_hat = _critic_input(crit, mix * real + (1 - mix) * fake, k, S)
                gp = _penalty(crit, x_hat, cfg.gp_weight, 3 * channels)
                loss_d = float(np.mean(d_fake) - np.mean(d_real)) + gp
                if not np.isfinite(loss_d):
                    _diverged("train_msgan critic", step, loss_d, f" (scale {k})")
                adamw_step(crit, opt_d)
        idx = rng.integers(0, n, b)
        gen.zero_grad()
        fake = gen(**generator_inputs(gen, x_l[idx], y_h[idx], k, S, rng))
        target = x_h[idx]
        l_rec, g_rec = recon_loss(fake, target, cfg.recon)
        l_ssim, g_ssim = ssim_loss(fake, target, cfg.ssim_max_val)
        loss_g = cfg.lambda_l1 * l_rec + cfg.nu_ssim * l_ssim
        grad = cfg.lambda_l1 * g_rec + cfg.nu_ssim * g_ssim
        if adversarial:
            d_out = crit(_critic_input(crit, fake, k, S))
            loss_g -= cfg.alpha_adv * float(np.mean(d_out))
            g_in = crit.backward(np.full_like(d_out, -cfg.alpha_adv / b))["x_h"]
            grad = grad + g_in[:, :3 * channels]
            crit.zero_grad()
        if not np.isfinite(loss_g):
            _diverged("train_msgan generator", step, loss_g, f" (scale {k})")
        gen.backward(grad.astype(dtype))
        adamw_step(gen, opt_g)
        ema_update(gen, cfg.ema_rate)
        row = {"step": step, "loss": loss_g, "loss_G": loss_g, "loss_D": loss_d, "gp": gp}
        row["recon"] = cfg.lambda_l1 * l_rec + cfg.nu_ssim * l_ssim
        log.append(row)
        if on_checkpoint and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            on_checkpoint(gan_checkpoint(gens, crits, cfg, step, channels))
    return gan_checkpoint(gens, crits, cfg, cfg.gan_steps, channels)


def _penalty(crit, x_hat, weight, n_detail):
    """Gradient penalty measured on the detail channels only (the scale channel is constant)."""
    if x_hat.shape[1] == n_detail:
        return gradient_penalty(crit, x_hat, weight)[0]
    return gradient_penalty(crit, x_hat, weight, channels=n_detail)[0]


def gan_checkpoint(gens, crits, cfg: TrainConfig, step, channels) -> Checkpoint:
    tensors = {}
    for i, (g, d) in enumerate(zip(gens, crits)):
        tag = "" if len(gens) == 1 else str(i + 1)
        tensors.update(g.state_dict(f"generator{tag}/"))
        tensors.update(d.state_dict(f"critic{tag}/"))
    meta = {"kind": "msgan", "step": int(step), "channels": int(channels), "levels": cfg.levels,
            "dtype": cfg.dtype, "shared": len(gens) == 1,
            "generators": [g.meta["config"] for g in gens],
            "critics": [d.meta["config"] for d in crits],
            "train": cfg.to_dict(), "config_hash": config_hash(cfg.to_dict())}
    return Checkpoint(OrderedDict(tensors), meta)
