"""Training losses with hand-written gradients.

All functions take NCHW arrays and return ``(value, grad_wrt_prediction)``
unless stated otherwise.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError, InvalidShapeError
from .stats import filter_valid, gaussian_window


def _check(pred, target):
    if pred.shape != target.shape:
        raise InvalidShapeError(f"prediction {pred.shape} vs target {target.shape}")


def mse_loss(pred, target):
    _check(pred, target)
    d = pred - target
    return float(np.mean(d * d)), (2.0 / d.size) * d


def l1_loss(pred, target):
    _check(pred, target)
    d = pred - target
    return float(np.mean(np.abs(d))), np.sign(d) / d.size


def _filter_adjoint(g: np.ndarray, win: np.ndarray) -> np.ndarray:
    """Transpose of :func:`filter_valid` (a 'full' correlation with the flipped kernel)."""
    k = win.size - 1
    pad = np.pad(g, [(0, 0)] * (g.ndim - 2) + [(k, k), (k, k)])
    return filter_valid(pad, win[::-1])


def ssim_window_size(h, w, window=11) -> int:
    """Largest odd window no bigger than ``window`` or the image extents."""
    k = min(window, h, w)
    return k if k % 2 else k - 1


def ssim_loss(pred, target, max_val=2.0, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """``1 - mean SSIM`` over every (sample, channel) map, and its gradient w.r.t. ``pred``.

    The window shrinks (to the largest odd size that fits) on small subbands.
    """
    _check(pred, target)
    if pred.ndim != 4:
        raise InvalidShapeError(f"expected NCHW, got {pred.shape}")
    k = ssim_window_size(pred.shape[2], pred.shape[3], window)
    if k < 1:
        raise InvalidShapeError("image too small for SSIM")
    win = gaussian_window(k, sigma)
    a = pred.astype(np.float64)
    b = target.astype(np.float64)
    c1, c2 = (k1 * max_val) ** 2, (k2 * max_val) ** 2
    mu_a, mu_b = filter_valid(a, win), filter_valid(b, win)
    e_aa, e_bb, e_ab = filter_valid(a * a, win), filter_valid(b * b, win), filter_valid(a * b, win)
    va, vb, cab = e_aa - mu_a**2, e_bb - mu_b**2, e_ab - mu_a * mu_b
    a1, a2 = 2 * mu_a * mu_b + c1, 2 * cab + c2
    b1, b2 = mu_a**2 + mu_b**2 + c1, va + vb + c2
    s = (a1 * a2) / (b1 * b2)
    scale = -1.0 / s.size
    d_mu = scale * s * (2 * mu_b / a1 - 2 * mu_b / a2 - 2 * mu_a / b1 + 2 * mu_a / b2)
    d_eaa = scale * s * (-1.0 / b2)
    d_eab = scale * s * (2.0 / a2)
    grad = (_filter_adjoint(d_mu, win) + 2 * a * _filter_adjoint(d_eaa, win)
            + b * _filter_adjoint(d_eab, win))
    return float(1.0 - np.mean(s)), grad.astype(pred.dtype, copy=False)


def recon_loss(pred, target, kind="l1"):
    if kind == "l1":
        return l1_loss(pred, target)
    if kind == "l2":
        return mse_loss(pred, target)
    raise InvalidArgumentError(f"unknown reconstruction loss {kind!r}")


def _input_gradient(critic, x):
    """Per-sample d critic(x) / dx without disturbing accumulated parameter gradients."""
    saved = [g.copy() for g in critic.gradients()]
    out = critic(x)
    g = critic.backward(np.ones_like(out))[critic.input_names[0]]
    for dst, src in zip(critic.gradients(), saved):
        dst[...] = src
    return out, g


def gradient_penalty(critic, x_hat, weight=10.0, h=1e-2, accumulate=True, channels=None):
    """``weight * mean_i (||grad_x D(x_hat_i)|| - 1)^2`` and, optionally, its parameter gradient.

    The parameter gradient needs a mixed second derivative.  Writing
    ``u_i`` for the unit input-gradient direction, the derivative of the
    penalty w.r.t. the critic weights is ``sum_i w_i d/dtheta [u_i . grad_x D(x_hat_i)]``
    with ``w_i = 2 weight (||g_i|| - 1) / B``; the directional derivative is
    replaced by the central difference ``(D(x_hat + h u) - D(x_hat - h u)) / 2h``,
    whose weight gradient comes from two ordinary backward passes.
    ``channels`` restricts the norm (and the perturbation) to the leading
    input channels.  Returns ``(penalty, gradient norms)``.
    """
    _, g = _input_gradient(critic, x_hat)
    if channels is not None:
        g = g.copy()
        g[:, channels:] = 0.0
    bsz = x_hat.shape[0]
    flat = g.reshape(bsz, -1).astype(np.float64)
    norms = np.sqrt(np.sum(flat * flat, axis=1))
    penalty = float(weight * np.mean((norms - 1.0) ** 2))
    if accumulate and weight > 0:
        w = 2.0 * weight * (norms - 1.0) / bsz
        u = (flat / np.maximum(norms, 1e-12)[:, None]).reshape(g.shape).astype(x_hat.dtype)
        coef = (w / (2.0 * h)).astype(x_hat.dtype)[:, None]
        out = critic(x_hat + h * u)
        critic.backward(np.broadcast_to(coef, out.shape).copy())
        out = critic(x_hat - h * u)
        critic.backward(-np.broadcast_to(coef, out.shape).copy())
    return penalty, norms
