"""Paired image datasets: manifests, normalization, patching and synthetic degradations."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

from .core import Rng
from .errors import FormatError, InsufficientDataError, InvalidArgumentError, InvalidShapeError
from .imageio import read_image


@dataclass(frozen=True)
class Degradation:
    """Synthetic corruption applied to the conditional image.

    ``resize`` is ``None``, ``"box"`` or ``"bicubic"`` (downsample by
    ``factor`` and upsample back); then Gaussian blur ``blur_sigma``; then
    additive Gaussian noise with standard deviation ``noise`` (in [-1, 1] units).
    """

    resize: str | None = None
    factor: int = 4
    blur_sigma: float = 0.0
    noise: float = 0.0

    def __post_init__(self):
        if self.resize not in (None, "box", "bicubic"):
            raise InvalidArgumentError(f"unknown resize method {self.resize!r}")
        if self.factor < 1 or self.blur_sigma < 0 or self.noise < 0:
            raise InvalidArgumentError(f"invalid degradation {self}")

    @property
    def active(self) -> bool:
        return self.resize is not None or self.blur_sigma > 0 or self.noise > 0

    @classmethod
    def parse(cls, text: str) -> "Degradation":
        """Parse ``"blur:2,noise:0.05,bicubic:4"`` style descriptions."""
        kw = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, _, val = part.partition(":")
            if key == "blur":
                kw["blur_sigma"] = float(val)
            elif key == "noise":
                kw["noise"] = float(val)
            elif key in ("box", "bicubic"):
                kw["resize"], kw["factor"] = key, int(val or 4)
            else:
                raise InvalidArgumentError(f"unknown degradation term {part!r}")
        return cls(**kw)


def _resize(img, size, method):
    # each channel through Pillow's 32-bit float mode
    chans = [np.asarray(Image.fromarray(img[..., c].astype(np.float32), mode="F").resize(size, method))
             for c in range(img.shape[-1])]
    return np.stack(chans, axis=-1).astype(np.float64)


def degrade(img, deg: Degradation, rng: Rng | None = None) -> np.ndarray:
    """Apply ``deg`` to an (H, W, C) image in [-1, 1]."""
    x = np.asarray(img, dtype=np.float64)
    h, w = x.shape[:2]
    if deg.resize is not None:
        if h % deg.factor or w % deg.factor:
            raise InvalidShapeError(f"{h}x{w} image not divisible by resize factor {deg.factor}")
        down = Image.Resampling.BOX if deg.resize == "box" else Image.Resampling.BICUBIC
        x = _resize(x, (w // deg.factor, h // deg.factor), down)
        x = _resize(x, (w, h), Image.Resampling.BILINEAR)
    if deg.blur_sigma > 0:
        x = ndimage.gaussian_filter(x, (deg.blur_sigma, deg.blur_sigma, 0), mode="reflect")
    if deg.noise > 0:
        if rng is None:
            raise InvalidArgumentError("additive noise needs an Rng")
        x = x + deg.noise * rng.randn(x.shape)
    return x


@dataclass(frozen=True)
class DataConfig:
    """``patch=None`` keeps whole images; ``patches_per_image=1`` takes the center crop,
    larger counts take seeded random crops."""

    patch: int | None = None
    patches_per_image: int = 1
    levels: int = 2
    seed: int = 0
    degradation: Degradation = field(default_factory=Degradation)

    def __post_init__(self):
        if self.patch is not None and self.patch < 1:
            raise InvalidArgumentError(f"patch must be positive, got {self.patch}")
        if self.patches_per_image < 1 or self.levels < 1:
            raise InvalidArgumentError("patches_per_image and levels must be >= 1")


@dataclass
class PairedDataset:
    """Conditional images ``y`` and targets ``x0`` as (N, H, W, C) arrays in [-1, 1]."""

    y: np.ndarray
    x0: np.ndarray
    sources: list = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        self.x0 = np.asarray(self.x0, dtype=np.float64)
        if self.y.ndim == 3:
            self.y, self.x0 = self.y[..., None], self.x0[..., None]
        if self.y.shape != self.x0.shape or self.y.ndim != 4:
            raise InvalidShapeError(f"pair arrays disagree: y {self.y.shape}, x0 {self.x0.shape}")

    def __len__(self):
        return self.y.shape[0]

    def __getitem__(self, i):
        return self.y[i], self.x0[i]

    @property
    def image_shape(self):
        return self.y.shape[1:]

    def check_levels(self, levels):
        h, w = self.y.shape[1:3]
        f = 2**levels
        if h % f or w % f:
            raise InvalidShapeError(f"extents {h}x{w} not divisible by 2^{levels} = {f}")

    def subset(self, idx) -> "PairedDataset":
        idx = np.asarray(idx)
        src = [self.sources[i] for i in idx] if self.sources else []
        return PairedDataset(self.y[idx], self.x0[idx], src, self.seed)

    def split(self, n_train):
        """First ``n_train`` items and the rest (order as stored)."""
        n = len(self)
        return self.subset(np.arange(min(n_train, n))), self.subset(np.arange(min(n_train, n), n))


def read_manifest(path):
    """``[(conditional, target), ...]``.

    Relative paths resolve against the manifest's directory when the file
    exists there, otherwise against the working directory.
    """
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        p = p.strip()
        cand = os.path.join(base, p)
        return cand if os.path.isabs(p) or os.path.exists(cand) or not os.path.exists(p) else os.path.abspath(p)

    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'conditional<TAB>target', got {line!r}")
            pairs.append(tuple(resolve(p) for p in parts))
    return pairs


def _crop_origins(h, w, p, count, rng: Rng):
    if count == 1:
        return [((h - p) // 2, (w - p) // 2)]
    oy = rng.integers(0, h - p + 1, count)
    ox = rng.integers(0, w - p + 1, count)
    return list(zip(oy.tolist(), ox.tolist()))


def build_dataset(ys, xs, cfg: DataConfig, sources=None) -> PairedDataset:
    """Patch and degrade in-memory (H, W, C) pairs deterministically under ``cfg.seed``."""
    root = Rng(cfg.seed)
    out_y, out_x, out_src = [], [], []
    errors = []
    for i, (y, x) in enumerate(zip(ys, xs)):
        name = sources[i] if sources else f"pair {i}"
        y, x = np.asarray(y, dtype=np.float64), np.asarray(x, dtype=np.float64)
        y = y[..., None] if y.ndim == 2 else y
        x = x[..., None] if x.ndim == 2 else x
        if y.shape != x.shape:
            errors.append(f"{name}: shape mismatch {y.shape} vs {x.shape}")
            continue
        r = root.spawn(i)
        if cfg.degradation.active:
            y = degrade(y, cfg.degradation, r.spawn(0))
        h, w = y.shape[:2]
        p = cfg.patch
        if p is None:
            views = [(y, x)]
        else:
            if p > h or p > w:
                errors.append(f"{name}: patch {p} exceeds image {h}x{w}")
                continue
            views = [(y[a:a + p, b:b + p], x[a:a + p, b:b + p])
                     for a, b in _crop_origins(h, w, p, cfg.patches_per_image, r.spawn(1))]
        f = 2**cfg.levels
        if views[0][0].shape[0] % f or views[0][0].shape[1] % f:
            errors.append(f"{name}: extents {views[0][0].shape[:2]} not divisible by 2^{cfg.levels}")
            continue
        for vy, vx in views:
            out_y.append(vy)
            out_x.append(vx)
            out_src.append(name)
    if errors:
        raise InvalidShapeError("; ".join(errors))
    if not out_y:
        raise InsufficientDataError("dataset is empty")
    shapes = {a.shape for a in out_y}
    if len(shapes) != 1:
        raise InvalidShapeError(f"pairs have differing shapes {sorted(shapes)}; set a patch size")
    return PairedDataset(np.stack(out_y), np.stack(out_x), out_src, cfg.seed)


def load_dataset(manifest, cfg: DataConfig = DataConfig()) -> PairedDataset:
    """Read every pair listed in ``manifest``; all per-file failures are reported together."""
    pairs = read_manifest(manifest)
    if not pairs:
        raise InsufficientDataError(f"{manifest}: manifest lists no pairs")
    ys, xs, failures = [], [], []
    for cond, target in pairs:
        imgs = []
        for path in (cond, target):
            try:
                imgs.append(read_image(path))
            except (OSError, FormatError) as exc:
                failures.append(f"{path}: {exc}")
        if len(imgs) == 2:
            ys.append(imgs[0])
            xs.append(imgs[1])
    if failures:
        raise FormatError("unreadable images: " + "; ".join(failures))
    return build_dataset(ys, xs, cfg, sources=[t for _, t in pairs])
