"""Central finite-difference checks of hand-written backward passes."""

from __future__ import annotations

import numpy as np

from ..core import Rng
from . import layers as L
from .network import Network


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0))
    if scale < 1e-12:
        return float(np.max(np.abs(analytic - numeric), initial=0.0))
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_module(forward, backward, inputs, params, grads, rng: Rng, h=1e-5, diff_inputs=None):
    """Compare ``backward`` against central differences of ``sum(R * forward())``.

    ``inputs``/``params`` are lists of float64 arrays perturbed in place;
    ``grads`` the matching parameter-gradient buffers.  Returns the largest
    relative error over every checked tensor.
    """
    out = forward()
    proj = rng.randn(out.shape)
    for g in grads:
        g.fill(0.0)
    in_grads = backward(proj)
    analytic = [gi for gi, d in zip(in_grads, diff_inputs or [True] * len(inputs)) if d]
    analytic += [g.copy() for g in grads]
    targets = [x for x, d in zip(inputs, diff_inputs or [True] * len(inputs)) if d] + list(params)
    worst = 0.0
    for a, x in zip(analytic, targets):
        num = np.zeros_like(x)
        flat, nflat = x.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = float(np.sum(proj * forward()))
            flat[i] = old - h
            fm = float(np.sum(proj * forward()))
            flat[i] = old
            nflat[i] = (fp - fm) / (2 * h)
        worst = max(worst, _rel_err(np.asarray(a), num))
    return worst


def check_layer(layer: L.Layer, inputs, rng: Rng, h=1e-5, diff_inputs=None):
    params = list(layer.params.values())
    grads = [layer.grads[k] for k in layer.params]
    return check_module(lambda: layer.forward(*inputs), lambda g: layer.backward(g),
                        inputs, params, grads, rng, h, diff_inputs)


def check_network(net: Network, inputs: dict, rng: Rng, h=1e-5, diff_inputs=()):
    names = list(diff_inputs)
    arrays = [inputs[n] for n in names]

    def backward(g):
        gi = net.backward(g)
        return [gi[n] for n in names]

    return check_module(lambda: net.forward(**inputs), backward, arrays,
                        net.parameters(), net.gradients(), rng, h)


def random_layer_cases(rng: Rng):
    """One (name, layer, inputs, diff_inputs) miniature per layer kind, float64."""
    r = rng
    cases = [
        ("conv2d", L.Conv2d(2, 3, 3, 1, 1, rng=r, std=0.5), [r.randn((2, 2, 4, 4))], None),
        ("conv2d_stride2", L.Conv2d(2, 3, 3, 2, 1, rng=r, std=0.5), [r.randn((2, 2, 4, 4))], None),
        ("conv2d_2x2", L.Conv2d(2, 2, 2, 2, 0, rng=r, std=0.5), [r.randn((1, 2, 4, 4))], None),
        ("linear", L.Linear(4, 3, rng=r, std=0.5), [r.randn((2, 4))], None),
        ("silu", L.SiLU(), [r.randn((2, 3, 4, 4))], None),
        ("group_norm", L.GroupNorm(2, 4), [r.randn((2, 4, 4, 4))], None),
        ("pixel_shuffle_up", L.PixelShuffle(2), [r.randn((1, 8, 4, 4))], None),
        ("self_attention", L.SelfAttention(4, 2, rng=r, std=0.5), [r.randn((2, 4, 4, 4))], None),
        ("timestep_embed", L.TimestepEmbed(8), [np.array([3.0, 17.0])], [False]),
        ("add", L.Add((1.0, -0.5)), [r.randn((2, 2, 4, 4)), r.randn((2, 2, 4, 4))], None),
        ("add_channel_bias", L.AddChannelBias(), [r.randn((2, 3, 4, 4)), r.randn((2, 3))], None),
        ("concat_channels", L.Concat(), [r.randn((2, 1, 4, 4)), r.randn((2, 2, 4, 4))], None),
        ("global_avg_pool", L.GlobalAvgPool(), [r.randn((2, 3, 4, 4))], None),
    ]
    gn = cases[5][1]
    gn.params["gamma"][:] = 1.0 + 0.3 * r.randn((4,))
    gn.params["beta"][:] = 0.3 * r.randn((4,))
    for _, layer, _, _ in cases:
        if "b" in layer.params:
            layer.params["b"][:] = 0.1 * r.randn(layer.params["b"].shape)
    return cases
