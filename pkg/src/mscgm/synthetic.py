"""Seeded synthetic corpora used by the analysis tests and the desk training task."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .core import Rng
from .errors import InvalidArgumentError


def _rng(rng) -> Rng:
    return rng if isinstance(rng, Rng) else Rng(int(rng))


def white_noise_corpus(n, size, rng=0) -> np.ndarray:
    """(n, size, size) i.i.d. standard normal images."""
    return _rng(rng).randn((n, size, size))


def power_law_covariance(size, alpha=1.0, beta=2.0) -> np.ndarray:
    """Pixel covariance C(d) = (1 + alpha d)^-beta over a size x size grid."""
    if alpha <= 0 or beta <= 0:
        raise InvalidArgumentError("alpha and beta must be positive")
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    p = np.stack([ii.ravel(), jj.ravel()], axis=1).astype(np.float64)
    d = np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1))
    return (1.0 + alpha * d) ** (-beta)


def power_law_field_corpus(n, size=64, rng=0, alpha=1.0, beta=2.0, transform="square") -> np.ndarray:
    """Power-law correlated Gaussian fields passed through a pointwise nonlinearity.

    ``transform`` is ``"square"``, ``"exp"`` or ``"none"``.  The nonlinearity
    makes fine-scale marginals non-Gaussian while coarse averages drift back
    towards normality.
    """
    cov = power_law_covariance(size, alpha, beta)
    chol = np.linalg.cholesky(cov + 1e-10 * np.eye(size * size))
    g = (chol @ _rng(rng).randn((size * size, n))).T.reshape(n, size, size)
    if transform == "square":
        return g * g
    if transform == "exp":
        return np.exp(g)
    if transform == "none":
        return g
    raise InvalidArgumentError(f"unknown transform {transform!r}")


def bead_corpus(n, size=128, rng=0, beads=(1, 3), sigma=(2.0, 3.0), amplitude=(0.5, 1.0),
                noise=(0.05, 0.1)) -> np.ndarray:
    """Sparse fluorescent-bead surrogate: a few Gaussian spots plus detector noise."""
    r = _rng(rng)
    out = np.empty((n, size, size))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    for i in range(n):
        ri = r.spawn(i)
        k = int(ri.integers(beads[0], beads[1] + 1, 1)[0])
        u = ri.uniform((k, 4))
        img = np.zeros((size, size))
        for cy, cx, s, a in u:
            s = sigma[0] + s * (sigma[1] - sigma[0])
            a = amplitude[0] + a * (amplitude[1] - amplitude[0])
            dy = np.minimum(np.abs(yy - cy * size), size - np.abs(yy - cy * size))
            dx = np.minimum(np.abs(xx - cx * size), size - np.abs(xx - cx * size))
            img += a * np.exp(-(dy * dy + dx * dx) / (2 * s * s))
        lvl = noise[0] + ri.uniform(1)[0] * (noise[1] - noise[0])
        out[i] = img + lvl * ri.randn((size, size))
    return out


def shapes_image(size, rng: Rng) -> np.ndarray:
    """Piecewise-constant rectangles and disks on a flat background, values in [-0.9, 0.9]."""
    img = np.full((size, size), -0.9 + 0.6 * rng.uniform(1)[0])
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    n_shapes = int(rng.integers(3, 7, 1)[0])
    for _ in range(n_shapes):
        kind, cy, cx, ext, ext2, val = rng.uniform(6)
        cy, cx = cy * size, cx * size
        val = -0.9 + 1.8 * val
        if kind < 0.5:
            hy, hx = 2 + ext * size / 4, 2 + ext2 * size / 4
            mask = (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)
        else:
            rad = 2 + ext * size / 5
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= rad * rad
        img[mask] = val
    return img


def shapes_corpus(n, size=32, rng=0) -> np.ndarray:
    r = _rng(rng)
    return np.stack([shapes_image(size, r.spawn(i)) for i in range(n)])


def blur_pairs(n, size=32, sigma=1.5, rng=0):
    """(y, x0) restoration pairs, each (n, size, size, 1): y is x0 under a Gaussian blur."""
    x0 = shapes_corpus(n, size, rng)
    y = np.stack([ndimage.gaussian_filter(x, sigma, mode="reflect") for x in x0])
    return y[..., None], x0[..., None]
