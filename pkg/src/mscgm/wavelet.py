"""Orthonormal 2D Haar transform and its multi-level pyramid.

Arrays are channels-last: ``(H, W)`` or ``(..., H, W, C)``; any leading axes
are treated as batch axes.  Filtering along a row (the W axis) followed by a
column (the H axis) with the normalized pair

    low  = [1/sqrt2,  1/sqrt2]
    high = [1/sqrt2, -1/sqrt2]

gives the four bands.  Naming: ``lh`` is row high-pass / column low-pass
(responds to horizontal variation), ``hl`` is row low-pass / column
high-pass, ``hh`` is high-pass on both axes.  With ``[[a, b], [c, d]]``:

    ll = (a + b + c + d) / 2      lh = (a - b + c - d) / 2
    hl = (a + b - c - d) / 2      hh = (a - b - c + d) / 2
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InvalidShapeError

BANDS = ("ll", "lh", "hl", "hh")


def _spatial_axes(x: np.ndarray) -> tuple[int, int]:
    if x.ndim == 2:
        return 0, 1
    if x.ndim >= 3:
        return x.ndim - 3, x.ndim - 2
    raise InvalidShapeError(f"expected (H, W) or (..., H, W, C), got shape {x.shape}")


@dataclass
class SubbandSet:
    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    def __post_init__(self):
        shapes = {b.shape for b in (self.ll, self.lh, self.hl, self.hh)}
        if len(shapes) != 1:
            raise InvalidShapeError(f"subband shapes disagree: {sorted(shapes)}")

    @property
    def shape(self):
        return self.ll.shape

    def details(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.lh, self.hl, self.hh

    def energy(self) -> float:
        return float(sum(np.sum(np.square(b, dtype=np.float64)) for b in (self.ll, self.lh, self.hl, self.hh)))


@dataclass
class SubbandPyramid:
    """``coarse_ll`` is the level-S approximation; ``details[0]`` is level S
    and ``details[-1]`` level 1 (coarse to fine).  Each detail set keeps the
    LL band produced at its level; reconstruction only reads lh/hl/hh."""

    coarse_ll: np.ndarray
    details: list = field(default_factory=list)

    @property
    def scales(self) -> int:
        return len(self.details)

    def detail(self, k: int) -> SubbandSet:
        """Detail set at level ``k`` (1 = finest)."""
        if not 1 <= k <= self.scales:
            raise InvalidArgumentError(f"level {k} outside 1..{self.scales}")
        return self.details[self.scales - k]

    def energy(self) -> float:
        e = float(np.sum(np.square(self.coarse_ll, dtype=np.float64)))
        for d in self.details:
            e += float(sum(np.sum(np.square(b, dtype=np.float64)) for b in d.details()))
        return e

    def to_vector(self) -> np.ndarray:
        """Flatten as ``[coarse_ll, (lh, hl, hh) for levels S..1]``."""
        parts = [self.coarse_ll.ravel()]
        for d in self.details:
            parts.extend(b.ravel() for b in d.details())
        return np.concatenate(parts)


def dwt2(image) -> SubbandSet:
    """Single-level orthonormal Haar analysis; H and W must be even."""
    x = np.asarray(image)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    ah, aw = _spatial_axes(x)
    h, w = x.shape[ah], x.shape[aw]
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise InvalidShapeError(f"dwt2 needs even spatial extents >= 2, got {h}x{w}")
    idx = [slice(None)] * x.ndim

    def take(r, c):
        idx[ah] = slice(r, None, 2)
        idx[aw] = slice(c, None, 2)
        return x[tuple(idx)]

    a, b, c, d = take(0, 0), take(0, 1), take(1, 0), take(1, 1)
    # row pass (pairs along W), then column pass (pairs along H); the two
    # 1/sqrt2 factors fold into one exact 0.5
    lo_top, hi_top = a + b, a - b
    lo_bot, hi_bot = c + d, c - d
    ll = (lo_top + lo_bot) * 0.5
    hl = (lo_top - lo_bot) * 0.5
    lh = (hi_top + hi_bot) * 0.5
    hh = (hi_top - hi_bot) * 0.5
    return SubbandSet(ll.astype(x.dtype, copy=False), lh.astype(x.dtype, copy=False),
                      hl.astype(x.dtype, copy=False), hh.astype(x.dtype, copy=False))


def idwt2(bands: SubbandSet) -> np.ndarray:
    """Inverse of :func:`dwt2` (synthesis with the time-reversed pair)."""
    ll, lh, hl, hh = (np.asarray(b) for b in (bands.ll, bands.lh, bands.hl, bands.hh))
    if not (ll.shape == lh.shape == hl.shape == hh.shape):
        raise InvalidShapeError(
            f"band shapes differ: ll {ll.shape}, lh {lh.shape}, hl {hl.shape}, hh {hh.shape}"
        )
    ah, aw = _spatial_axes(ll)
    lo_top = ll + hl
    lo_bot = ll - hl
    hi_top = lh + hh
    hi_bot = lh - hh
    shape = list(ll.shape)
    shape[ah] *= 2
    shape[aw] *= 2
    out = np.empty(shape, dtype=np.result_type(ll, lh, hl, hh))
    idx = [slice(None)] * out.ndim

    def put(r, c, v):
        idx[ah] = slice(r, None, 2)
        idx[aw] = slice(c, None, 2)
        out[tuple(idx)] = v

    put(0, 0, (lo_top + hi_top) * 0.5)
    put(0, 1, (lo_top - hi_top) * 0.5)
    put(1, 0, (lo_bot + hi_bot) * 0.5)
    put(1, 1, (lo_bot - hi_bot) * 0.5)
    return out


def decompose(image, levels: int) -> SubbandPyramid:
    """Apply :func:`dwt2` ``levels`` times, each time to the previous LL band."""
    x = np.asarray(image)
    if int(levels) != levels or levels < 1:
        raise InvalidArgumentError(f"levels must be a positive integer, got {levels}")
    ah, aw = _spatial_axes(x)
    h, w = x.shape[ah], x.shape[aw]
    f = 2**levels
    if h % f or w % f:
        raise InvalidShapeError(f"spatial extents {h}x{w} are not divisible by 2^{levels} = {f}")
    details = []
    cur = x
    for _ in range(levels):
        bands = dwt2(cur)
        details.append(bands)
        cur = bands.ll
    details.reverse()
    return SubbandPyramid(coarse_ll=cur, details=details)


def reconstruct(p: SubbandPyramid) -> np.ndarray:
    """Iterated :func:`idwt2` from the coarse band outward."""
    cur = np.asarray(p.coarse_ll)
    for d in p.details:
        cur = idwt2(SubbandSet(cur, d.lh, d.hl, d.hh))
    return cur


def haar_matrix(h: int, w: int, levels: int = 1) -> np.ndarray:
    """Dense matrix A with ``decompose(x).to_vector() == A @ x.ravel()``.

    Built column by column from unit-impulse responses; meant for small
    grids (orthogonality checks, Gaussian duality experiments).
    """
    n = h * w
    a = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[:] = 0.0
        e[j] = 1.0
        a[:, j] = decompose(e.reshape(h, w), levels).to_vector()
    return a
