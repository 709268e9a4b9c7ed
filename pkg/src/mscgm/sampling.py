"""End-to-end restoration: bridge sampling on the coarse band, then detail synthesis per scale."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import bbdp
from .checkpoint import Checkpoint
from .core import Rng
from .errors import ContractViolationError, InvalidArgumentError, InvalidShapeError
from .nn import (DiscriminatorConfig, GeneratorConfig, UNetConfig, build_discriminator, build_eps_unet,
                 build_generator)
from .train import generator_inputs, split_details, to_nchw, to_nhwc
from .wavelet import SubbandSet, decompose, idwt2


def eps_network_from_checkpoint(ckpt: Checkpoint, use_ema=True):
    meta = ckpt.metadata
    if meta.get("kind") != "bbdp":
        raise ContractViolationError(f"expected a bbdp checkpoint, got kind {meta.get('kind')!r}")
    net = build_eps_unet(UNetConfig(**meta["unet"])).astype(np.dtype(meta.get("dtype", "float32")))
    net.load_state_dict(ckpt.tensors, "eps/")
    return net.clone(use_ema=True) if use_ema and net.ema is not None else net


def generators_from_checkpoint(ckpt: Checkpoint, use_ema=True, with_critics=False):
    meta = ckpt.metadata
    if meta.get("kind") != "msgan":
        raise ContractViolationError(f"expected an msgan checkpoint, got kind {meta.get('kind')!r}")
    dtype = np.dtype(meta.get("dtype", "float32"))
    gens, crits = [], []
    many = len(meta["generators"]) > 1
    for i, gcfg in enumerate(meta["generators"]):
        tag = str(i + 1) if many else ""
        g = build_generator(GeneratorConfig(**gcfg)).astype(dtype)
        g.load_state_dict(ckpt.tensors, f"generator{tag}/")
        gens.append(g.clone(use_ema=True) if use_ema and g.ema is not None else g)
        if with_critics:
            d = build_discriminator(DiscriminatorConfig(**meta["critics"][i])).astype(dtype)
            d.load_state_dict(ckpt.tensors, f"critic{tag}/")
            crits.append(d)
    return (gens, crits) if with_critics else gens


@dataclass
class SampleTrace:
    """Instrumentation of one :func:`sample_full` call."""

    diffusion_pixels: list = field(default_factory=list)
    stage_seconds: dict = field(default_factory=dict)
    grid: list = field(default_factory=list)


class EpsModel:
    """Adapts an NCHW predictor network to the ``bbdp.sample`` calling convention."""

    def __init__(self, net):
        self.net = net
        self.dtype = net.dtype

    def __call__(self, x, y, t, frac):
        n = x.shape[0]
        return self.net(x.astype(self.dtype, copy=False), y.astype(self.dtype, copy=False),
                        np.full(n, t, dtype=np.int64))


def check_compatible(bbdp_ckpt: Checkpoint, gan_ckpt: Checkpoint):
    mb, mg = bbdp_ckpt.metadata, gan_ckpt.metadata
    for role, meta, kind in (("bridge", mb, "bbdp"), ("GAN", mg, "msgan")):
        if meta.get("kind") != kind:
            raise ContractViolationError(f"{role} checkpoint has kind {meta.get('kind')!r}, expected {kind!r}")
    for key in ("levels", "channels"):
        if mb.get(key) != mg.get(key):
            raise ContractViolationError(f"checkpoints disagree on {key}: {mb.get(key)} vs {mg.get(key)}")


def sample_full(bbdp_ckpt, gan_ckpt, y, n_steps=None, rng: Rng | None = None, *, trace: SampleTrace | None = None,
                eps_net=None, generators=None, stochastic=True) -> np.ndarray:
    """Restore ``y`` ((H, W, C) or (N, H, W, C), values in [-1, 1]).

    Only ``y`` and the two checkpoints are read.  ``n_steps`` defaults to
    the full chain.  Pre-built networks may be passed to skip rebuilding.
    """
    check_compatible(bbdp_ckpt, gan_ckpt)
    meta = bbdp_ckpt.metadata
    S, T, C = meta["levels"], meta["T"], meta["channels"]
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 3
    if single:
        y = y[None]
    if y.ndim != 4 or y.shape[-1] != C:
        raise ContractViolationError(f"input of shape {y.shape[1:] if single else y.shape} does not match "
                                     f"{C}-channel checkpoints")
    h, w = y.shape[1:3]
    if h % 2**S or w % 2**S:
        raise InvalidShapeError(f"input extents {h}x{w} must be divisible by 2^{S} = {2**S}")
    rng = Rng(0) if rng is None else rng
    trace = SampleTrace() if trace is None else trace
    eps_net = eps_network_from_checkpoint(bbdp_ckpt) if eps_net is None else eps_net
    gens = generators_from_checkpoint(gan_ckpt) if generators is None else generators
    dtype = eps_net.dtype

    t0 = time.perf_counter()
    py = decompose(y, S)
    trace.stage_seconds["decompose"] = time.perf_counter() - t0

    sched = bbdp.make_schedule(T)
    grid = bbdp.make_grid(T, T if n_steps is None else n_steps)
    trace.grid = [int(g) for g in grid]
    y_ll = to_nchw(py.coarse_ll).astype(dtype)
    t0 = time.perf_counter()
    steps = {}
    x_ll = bbdp.sample(sched, EpsModel(eps_net), y_ll, grid, rng.spawn(1) if stochastic else None, trace=steps)
    trace.stage_seconds["diffusion"] = time.perf_counter() - t0
    trace.diffusion_pixels = steps["pixels"]

    zrng = rng.spawn(2)
    cur = x_ll
    for k in range(S, 0, -1):
        t0 = time.perf_counter()
        gen = gens[0] if len(gens) == 1 else gens[k - 1]
        yd = py.detail(k)
        y_h = np.concatenate([to_nchw(yd.lh), to_nchw(yd.hl), to_nchw(yd.hh)], axis=1).astype(dtype)
        x_h = gen(**generator_inputs(gen, cur.astype(dtype), y_h, k, S, zrng))
        if x_h.shape != y_h.shape:
            raise ContractViolationError(f"generator produced {x_h.shape}, expected {y_h.shape}")
        lh, hl, hh = split_details(x_h.astype(np.float64), C)
        cur = to_nchw(idwt2(SubbandSet(to_nhwc(cur).astype(np.float64), lh, hl, hh)))
        trace.stage_seconds[f"gan_scale{k}"] = time.perf_counter() - t0
    out = np.clip(to_nhwc(cur), -1.0, 1.0)
    return out[0] if single else out


def full_resolution_diffusion(eps_net, y, n_steps, T, rng: Rng | None = None, trace: SampleTrace | None = None):
    """Control run: the same bridge sampler applied directly to the full-resolution image."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 3:
        y = y[None]
    sched = bbdp.make_schedule(T)
    grid = bbdp.make_grid(T, n_steps)
    steps = {}
    t0 = time.perf_counter()
    x = bbdp.sample(sched, EpsModel(eps_net), to_nchw(y).astype(eps_net.dtype), grid, rng, trace=steps)
    if trace is not None:
        trace.stage_seconds["diffusion"] = time.perf_counter() - t0
        trace.diffusion_pixels = steps["pixels"]
        trace.grid = [int(g) for g in grid]
    return to_nhwc(x)


def write_trace_csv(trace: SampleTrace, fh):
    """Sidecar report: per-stage wall-clock rows, then per-step diffusion pixel counts."""
    fh.write("kind,name,value\n")
    for name, sec in trace.stage_seconds.items():
        fh.write(f"stage_seconds,{name},{sec!r}\n")
    for t, px in zip(trace.grid, trace.diffusion_pixels):
        fh.write(f"diffusion_pixels,t={t},{px}\n")
    fh.write(f"diffusion_pixels_total,all,{sum(trace.diffusion_pixels)}\n")
