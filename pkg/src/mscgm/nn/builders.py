"""Miniature epsilon-UNet, subband generator and Wasserstein critic.

All three are scaled-down stand-ins (a few residual conv blocks per
resolution) for the full-size attention UNet / NAFNet / 5-block critic;
widths, depths and attention are configurable.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..core import Rng
from ..errors import InvalidArgumentError
from .layers import (Add, AddChannelBias, Concat, Conv2d, GlobalAvgPool, GroupNorm, Linear, PixelShuffle,
                     SelfAttention, SiLU, TimestepEmbed)
from .network import Network


@dataclass(frozen=True)
class UNetConfig:
    channels: int = 1
    base: int = 32
    levels: int = 2
    blocks: int = 1
    attention: bool = True
    heads: int = 4
    groups: int = 8
    temb_dim: int = 64
    predict_offset_from_x0: bool = True
    seed: int = 0

    def validate(self):
        if self.channels < 1 or self.base < 1 or self.levels < 1 or self.blocks < 1:
            raise InvalidArgumentError(f"invalid UNet config {self}")
        if self.base % self.groups:
            raise InvalidArgumentError(f"base {self.base} not divisible by groups {self.groups}")
        if self.attention and (self.base * 2 ** (self.levels - 1)) % self.heads:
            raise InvalidArgumentError("attention width not divisible by heads")
        if self.temb_dim % 2:
            raise InvalidArgumentError("temb_dim must be even")


@dataclass(frozen=True)
class GeneratorConfig:
    channels: int = 1
    base: int = 32
    levels: int = 2
    blocks: int = 1
    groups: int = 8
    noise_channels: int = 1
    scale_channel: bool = True
    residual: bool = True
    seed: int = 1

    def validate(self):
        if self.channels < 1 or self.base < 1 or self.levels < 1 or self.blocks < 1:
            raise InvalidArgumentError(f"invalid generator config {self}")
        if self.base % self.groups:
            raise InvalidArgumentError(f"base {self.base} not divisible by groups {self.groups}")
        if self.noise_channels < 0:
            raise InvalidArgumentError("noise_channels must be >= 0")


@dataclass(frozen=True)
class DiscriminatorConfig:
    channels: int = 1
    base: int = 32
    blocks: int = 3
    dense: int = 64
    scale_channel: bool = True
    seed: int = 2

    def validate(self):
        if self.channels < 1 or self.base < 1 or self.blocks < 1 or self.dense < 1:
            raise InvalidArgumentError(f"invalid discriminator config {self}")


def config_dict(cfg) -> dict:
    return asdict(cfg)


class _Builder:
    def __init__(self, net: Network, rng: Rng):
        self.net, self.rng, self.n = net, rng, 0

    def node(self, prefix, layer, inputs):
        self.n += 1
        return self.net.add(f"{prefix}{self.n}", layer, inputs)

    def res_block(self, x, cin, cout, groups, temb=None, temb_dim=None):
        h = self.node("gn", GroupNorm(groups, cin), x)
        h = self.node("act", SiLU(), h)
        h = self.node("conv", Conv2d(cin, cout, 3, 1, 1, rng=self.rng), h)
        if temb is not None:
            e = self.node("temb_proj", Linear(temb_dim, cout, rng=self.rng), temb)
            h = self.node("temb_add", AddChannelBias(), (h, e))
        h = self.node("gn", GroupNorm(groups, cout), h)
        h = self.node("act", SiLU(), h)
        h = self.node("conv", Conv2d(cout, cout, 3, 1, 1, rng=self.rng, zero=True), h)
        skip = x if cin == cout else self.node("skip", Conv2d(cin, cout, 1, rng=self.rng), x)
        return self.node("res", Add((1.0, 1.0)), (skip, h))


def build_eps_unet(cfg: UNetConfig = UNetConfig()) -> Network:
    """Inputs ``x_t, y`` (N, C, h, w) and ``t`` (N,) integer steps -> offset estimate."""
    cfg.validate()
    rng = Rng(cfg.seed)
    net = Network(("x_t", "y", "t"), name="eps_unet")
    b = _Builder(net, rng)
    c, base, g = cfg.channels, cfg.base, cfg.groups
    temb = b.node("temb", TimestepEmbed(cfg.temb_dim), "t")
    temb = b.node("temb_lin", Linear(cfg.temb_dim, cfg.temb_dim, rng=rng), temb)
    temb = b.node("temb_act", SiLU(), temb)
    temb = b.node("temb_lin", Linear(cfg.temb_dim, cfg.temb_dim, rng=rng), temb)
    temb = b.node("temb_act", SiLU(), temb)
    h = b.node("cat", Concat(), ("x_t", "y"))
    h = b.node("conv_in", Conv2d(2 * c, base, 3, 1, 1, rng=rng), h)
    skips, ch = [], base
    for lvl in range(cfg.levels):
        for _ in range(cfg.blocks):
            h = b.res_block(h, ch, ch, g, temb, cfg.temb_dim)
        if lvl < cfg.levels - 1:
            skips.append((h, ch))
            h = b.node("down", Conv2d(ch, 2 * ch, 3, 2, 1, rng=rng), h)
            ch *= 2
    if cfg.attention:
        a = b.node("attn_gn", GroupNorm(g, ch), h)
        a = b.node("attn", SelfAttention(ch, cfg.heads, rng=rng), a)
        h = b.node("attn_res", Add((1.0, 1.0)), (h, a))
    for skip, sch in reversed(skips):
        h = b.node("up_proj", Conv2d(ch, 4 * sch, 1, rng=rng), h)
        h = b.node("up", PixelShuffle(2), h)
        h = b.node("cat", Concat(), (h, skip))
        for i in range(cfg.blocks):
            h = b.res_block(h, 2 * sch if i == 0 else sch, sch, g, temb, cfg.temb_dim)
        ch = sch
    h = b.node("gn_out", GroupNorm(g, ch), h)
    h = b.node("act_out", SiLU(), h)
    out = b.node("conv_out", Conv2d(ch, c, 3, 1, 1, rng=rng), h)
    if cfg.predict_offset_from_x0:
        # out is read as x0_hat - y, so the offset is x_t - x0_hat
        b.node("offset", Add((1.0, -1.0, -1.0)), ("x_t", "y", out))
    net.meta = {"kind": "eps_unet", "config": config_dict(cfg)}
    net.init_ema()
    return net


def build_generator(cfg: GeneratorConfig = GeneratorConfig()) -> Network:
    """Inputs ``x_l`` (N, C), ``y_h`` (N, 3C), ``z`` (N, noise), ``scale`` (N, 1) maps -> (N, 3C)."""
    cfg.validate()
    rng = Rng(cfg.seed)
    inputs = ["x_l", "y_h"]
    if cfg.noise_channels:
        inputs.append("z")
    if cfg.scale_channel:
        inputs.append("scale")
    net = Network(tuple(inputs), name="generator")
    b = _Builder(net, rng)
    c, base, g = cfg.channels, cfg.base, cfg.groups
    cin = 4 * c + cfg.noise_channels + (1 if cfg.scale_channel else 0)
    h = b.node("cat", Concat(), tuple(inputs))
    h = b.node("conv_in", Conv2d(cin, base, 3, 1, 1, rng=rng), h)
    skips, ch = [], base
    for lvl in range(cfg.levels):
        for _ in range(cfg.blocks):
            h = b.res_block(h, ch, ch, g)
        if lvl < cfg.levels - 1:
            skips.append((h, ch))
            h = b.node("down", Conv2d(ch, 2 * ch, 2, 2, 0, rng=rng), h)
            ch *= 2
    for skip, sch in reversed(skips):
        h = b.node("up_proj", Conv2d(ch, 4 * sch, 1, rng=rng), h)
        h = b.node("up", PixelShuffle(2), h)
        h = b.node("skip_add", Add((1.0, 1.0)), (h, skip))
        for _ in range(cfg.blocks):
            h = b.res_block(h, sch, sch, g)
        ch = sch
    h = b.node("gn_out", GroupNorm(g, ch), h)
    h = b.node("act_out", SiLU(), h)
    out = b.node("conv_out", Conv2d(ch, 3 * c, 3, 1, 1, rng=rng), h)
    if cfg.residual:
        b.node("detail", Add((1.0, 1.0)), ("y_h", out))
    net.meta = {"kind": "generator", "config": config_dict(cfg)}
    net.init_ema()
    return net


def build_discriminator(cfg: DiscriminatorConfig = DiscriminatorConfig()) -> Network:
    """Input ``x_h`` (N, 3C[+1], h, w) detail stack -> (N, 1) critic score (no sigmoid)."""
    cfg.validate()
    rng = Rng(cfg.seed)
    net = Network(("x_h",), name="discriminator")
    b = _Builder(net, rng)
    cin = 3 * cfg.channels + (1 if cfg.scale_channel else 0)
    h, ch = "x_h", cfg.base
    h = b.node("conv_in", Conv2d(cin, ch, 3, 1, 1, rng=rng), h)
    h = b.node("act", SiLU(), h)
    for _ in range(cfg.blocks):
        h = b.node("down", Conv2d(ch, 2 * ch, 3, 2, 1, rng=rng), h)
        h = b.node("act", SiLU(), h)
        ch *= 2
    h = b.node("pool", GlobalAvgPool(), h)
    h = b.node("dense", Linear(ch, cfg.dense, rng=rng), h)
    h = b.node("act", SiLU(), h)
    b.node("score", Linear(cfg.dense, 1, rng=rng), h)
    net.meta = {"kind": "discriminator", "config": config_dict(cfg)}
    net.init_ema()
    return net
