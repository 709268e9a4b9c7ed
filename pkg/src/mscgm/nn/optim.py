"""AdamW with decoupled weight decay, and EMA shadow parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError, TrainingDivergenceError
from .network import Network


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgumentError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise InvalidArgumentError(f"{name} must lie in [0, 1), got {b}")
        if self.eps <= 0 or self.weight_decay < 0:
            raise InvalidArgumentError("eps must be > 0 and weight_decay >= 0")


def adamw_step(net: Network, cfg: OptimizerConfig):
    """One bias-corrected AdamW update from the accumulated gradients."""
    params, grads = net.parameters(), net.gradients()
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            name = list(net.named_parameters())[i]
            raise TrainingDivergenceError(f"{net.name}: non-finite gradient in {name}")
    if net.opt_m is None:
        net.opt_m = [np.zeros_like(p) for p in params]
        net.opt_v = [np.zeros_like(p) for p in params]
    net.opt_step += 1
    k = net.opt_step
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1**k
    bc2 = 1.0 - b2**k
    lr = cfg.learning_rate
    for p, g, m, v in zip(params, grads, net.opt_m, net.opt_v):
        if cfg.weight_decay:
            p *= 1.0 - lr * cfg.weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= (lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)).astype(p.dtype, copy=False)
    return params


def ema_update(net: Network, rate: float):
    """ema <- rate * ema + (1 - rate) * params."""
    if not 0.0 <= rate <= 1.0:
        raise InvalidArgumentError(f"EMA rate must lie in [0, 1], got {rate}")
    if net.ema is None:
        net.init_ema()
    for e, p in zip(net.ema, net.parameters()):
        e *= rate
        e += (1.0 - rate) * p
    return net.ema
