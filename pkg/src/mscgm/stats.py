"""Image-quality metrics and wavelet-subband distribution statistics."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .core import Rng, eigh_sym
from .errors import (DegenerateDistributionError, DomainError, InsufficientDataError, InvalidArgumentError,
                     InvalidShapeError)
from .wavelet import decompose, haar_matrix


# ---------------------------------------------------------------------------
# restoration metrics
# ---------------------------------------------------------------------------


def psnr(a, b, max_val=1.0) -> float:
    """10 log10(max_val^2 / MSE); ``inf`` for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidShapeError(f"psnr: shapes differ {a.shape} vs {b.shape}")
    if max_val <= 0:
        raise InvalidArgumentError("max_val must be > 0")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / mse)


def gaussian_window(size=11, sigma=1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of the last two axes with the 1-D kernel ``g``."""
    k = g.size
    h, w = x.shape[-2], x.shape[-1]
    rows = np.zeros(x.shape[:-1] + (w - k + 1,), dtype=np.float64)
    for j in range(k):
        rows += g[j] * x[..., j:j + w - k + 1]
    out = np.zeros(x.shape[:-2] + (h - k + 1, w - k + 1), dtype=np.float64)
    for i in range(k):
        out += g[i] * rows[..., i:i + h - k + 1, :]
    return out


def ssim(a, b, max_val=1.0, window=11, sigma=1.5, k1=0.01, k2=0.03) -> float:
    """Mean SSIM with a Gaussian window, averaged over channels.

    Accepts ``(H, W)`` or ``(H, W, C)``.  Only windows fully inside the image
    contribute (no padding).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidShapeError(f"ssim: shapes differ {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.ndim != 3:
        raise InvalidShapeError(f"ssim expects (H, W) or (H, W, C), got {a.shape}")
    if a.shape[0] < window or a.shape[1] < window:
        raise InvalidShapeError(f"image {a.shape[0]}x{a.shape[1]} smaller than the {window}x{window} window")
    return float(np.mean(ssim_map(np.moveaxis(a, -1, 0), np.moveaxis(b, -1, 0), max_val, window, sigma, k1, k2)))


def ssim_map(a, b, max_val=1.0, window=11, sigma=1.5, k1=0.01, k2=0.03) -> np.ndarray:
    """Local SSIM over the last two axes (leading axes are independent images)."""
    g = gaussian_window(window, sigma)
    c1 = (k1 * max_val) ** 2
    c2 = (k2 * max_val) ** 2
    mu_a, mu_b = filter_valid(a, g), filter_valid(b, g)
    s_aa = filter_valid(a * a, g) - mu_a * mu_a
    s_bb = filter_valid(b * b, g) - mu_b * mu_b
    s_ab = filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * s_ab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (s_aa + s_bb + c2)
    return num / den


# ---------------------------------------------------------------------------
# moment and distribution estimators
# ---------------------------------------------------------------------------


def _standardized(samples, min_n=4):
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < min_n:
        raise InsufficientDataError(f"need at least {min_n} samples, got {x.size}")
    mu = x.mean()
    xc = x - mu
    sd = math.sqrt(float(np.mean(xc * xc)))
    if sd == 0.0 or sd <= 1e-300 or sd < 1e-14 * max(abs(mu), 1e-300):
        raise DegenerateDistributionError("sample has zero variance")
    return xc / sd


def skewness(samples) -> float:
    """Plug-in E[((X - mu) / sigma)^3] with the biased (1/n) sigma."""
    z = _standardized(samples)
    return float(np.mean(z * z * z))


def excess_kurtosis(samples) -> float:
    """Plug-in E[((X - mu) / sigma)^4] - 3; zero for a Gaussian."""
    z = _standardized(samples)
    z2 = z * z
    return float(np.mean(z2 * z2) - 3.0)


def kl_to_std_normal(samples, n_bins=64, normalize=False, span=6.0) -> float:
    """Binned KL(sample || N(0, 1)) in nats.

    Equal-width bins over [-span, span]; values outside are clipped into the
    edge bins and the edge reference masses include the normal tails, so
    both histograms are proper distributions.  Empty bins contribute zero.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if n_bins < 8:
        raise InvalidArgumentError(f"n_bins must be >= 8, got {n_bins}")
    if x.size < n_bins:
        raise InsufficientDataError(f"{x.size} samples is fewer than {n_bins} bins")
    if normalize:
        x = _standardized(x, min_n=n_bins)
    edges = np.linspace(-span, span, n_bins + 1)
    counts, _ = np.histogram(np.clip(x, -span, span), bins=edges)
    p = counts / x.size
    cdf = ndtr(edges)
    cdf[0], cdf[-1] = 0.0, 1.0
    q = np.diff(cdf)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def sparsity(band, threshold, signed=False) -> float:
    """Fraction of coefficients with ``|x| <= threshold`` (``x <= threshold`` if ``signed``)."""
    x = np.asarray(band)
    if x.size == 0:
        raise InvalidShapeError("sparsity of an empty band")
    if threshold < 0:
        raise InvalidArgumentError("threshold must be >= 0")
    hit = (x <= threshold) if signed else (np.abs(x) <= threshold)
    return float(np.count_nonzero(hit)) / x.size


def condition_number(patches, rel_reg=1e-9) -> float:
    """lambda_max / lambda_min of the sample covariance of flattened patches.

    The covariance is regularized by ``rel_reg * trace / dim`` on the
    diagonal, which keeps the ratio invariant to a global rescaling of the
    corpus.
    """
    x = np.asarray([np.ravel(p) for p in patches] if isinstance(patches, (list, tuple)) else patches,
                   dtype=np.float64)
    if x.ndim != 2:
        x = x.reshape(x.shape[0], -1)
    n, d = x.shape
    if n < 2:
        raise InsufficientDataError("need at least two patches")
    if n < d + 1:
        warnings.warn(f"{n} patches for dimension {d}: covariance is rank deficient, result is "
                      "dominated by the regularizer", RuntimeWarning, stacklevel=2)
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (n - 1)
    cov = 0.5 * (cov + cov.T)
    reg = rel_reg * np.trace(cov) / d
    if reg == 0.0:
        raise DegenerateDistributionError("all patches identical")
    w, _ = eigh_sym(cov + reg * np.eye(d))
    return float(w[-1] / w[0])


def random_patches(images, size: int, count: int, rng: Rng) -> list:
    """``count`` square crops of side ``size`` drawn uniformly from ``images``."""
    out = []
    imgs = [np.asarray(im) for im in images]
    for im in imgs:
        if im.shape[0] < size or im.shape[1] < size:
            raise InvalidShapeError(f"image {im.shape[:2]} smaller than patch {size}")
    picks = rng.integers(0, len(imgs), (count,))
    for i in picks:
        im = imgs[int(i)]
        r = int(rng.integers(0, im.shape[0] - size + 1))
        c = int(rng.integers(0, im.shape[1] - size + 1))
        out.append(im[r:r + size, c:c + size])
    return out


# ---------------------------------------------------------------------------
# subband scan
# ---------------------------------------------------------------------------

SCAN_BANDS = ("LL", "LH", "HL", "HH")


@dataclass
class SubbandStatsRow:
    scale: int
    band: str
    kl_divergence: float
    skewness: float
    excess_kurtosis: float
    sparsity: dict = field(default_factory=dict)
    n_samples: int = 0


def _fmt_threshold(t) -> str:
    return f"{float(t):g}"


def csv_header(thresholds) -> list:
    return (["scale", "band", "kl_divergence", "skewness", "excess_kurtosis"]
            + [f"sparsity_t{_fmt_threshold(t)}" for t in thresholds] + ["n_samples"])


def subband_scan(images, levels: int, thresholds=(0.01,), n_bins=64) -> list:
    """Pool coefficients per (scale, band) over a corpus and summarize each pool.

    Rows come scale-major (1..S) in band order LL, LH, HL, HH.  KL is taken
    on the standardized pool; moments and sparsity on raw coefficients.
    """
    images = list(images)
    if not images:
        raise InsufficientDataError("empty image corpus")
    pools = {(k, b): [] for k in range(1, levels + 1) for b in SCAN_BANDS}
    for im in images:
        p = decompose(np.asarray(im, dtype=np.float64), levels)
        for k in range(1, levels + 1):
            d = p.detail(k)
            for b, arr in zip(SCAN_BANDS, (d.ll, d.lh, d.hl, d.hh)):
                pools[(k, b)].append(arr.ravel())
    rows = []
    for k in range(1, levels + 1):
        for b in SCAN_BANDS:
            x = np.concatenate(pools[(k, b)])
            bins = n_bins if x.size >= n_bins else max(8, x.size)
            try:
                kl = kl_to_std_normal(x, n_bins=bins, normalize=True)
                sk, ku = skewness(x), excess_kurtosis(x)
            except (DegenerateDistributionError, InsufficientDataError):
                kl = sk = ku = float("nan")
            rows.append(SubbandStatsRow(k, b, kl, sk, ku, {float(t): sparsity(x, t) for t in thresholds},
                                        int(x.size)))
    return rows


def write_scan_csv(rows, thresholds, fh=None) -> str:
    """Write rows in the scan CSV schema; returns the text when ``fh`` is None."""
    buf = io.StringIO() if fh is None else fh
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(thresholds))
    for r in rows:
        w.writerow([r.scale, r.band, repr(r.kl_divergence), repr(r.skewness), repr(r.excess_kurtosis)]
                   + [repr(r.sparsity[float(t)]) for t in thresholds] + [r.n_samples])
    return buf.getvalue() if fh is None else ""


def corpus_moments(images) -> dict:
    """Pixel-level skewness and excess kurtosis of a whole corpus."""
    x = np.concatenate([np.asarray(im, dtype=np.float64).ravel() for im in images])
    return {"skewness": skewness(x), "excess_kurtosis": excess_kurtosis(x), "n_samples": int(x.size)}


# ---------------------------------------------------------------------------
# spatial / wavelet score duality for Gaussian data under the OU process
# ---------------------------------------------------------------------------


def ou_marginal_cov(sigma, t) -> np.ndarray:
    """Covariance at time t of dX = -X dt + sqrt(2) dB started from N(0, sigma)."""
    e = math.exp(-2.0 * t)
    return e * np.asarray(sigma) + (1.0 - e) * np.eye(np.shape(sigma)[0])


def gaussian_score(cov, x) -> np.ndarray:
    """grad log N(x; 0, cov) = -cov^{-1} x."""
    return -np.linalg.solve(cov, x)


def duality_check(sigma, t, x, levels=1) -> float:
    """max |r_t(A x) - A s_t(x)| where A is the orthonormal Haar matrix.

    ``s_t`` is the score of the spatial OU marginal and ``r_t`` the score of
    the marginal of the wavelet-domain process started from A # N(0, sigma).
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).ravel()
    d = sigma.shape[0]
    if sigma.shape != (d, d) or x.size != d:
        raise InvalidShapeError(f"sigma {sigma.shape} and x {x.shape} disagree")
    if np.max(np.abs(sigma - sigma.T)) > 1e-12 * max(1.0, np.max(np.abs(sigma))):
        raise DomainError("sigma is not symmetric")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise DomainError("sigma is not positive definite") from None
    side = int(round(math.sqrt(d)))
    if side * side != d:
        raise InvalidShapeError(f"dimension {d} is not a square image")
    a = haar_matrix(side, side, levels)
    # spatial route
    s = gaussian_score(ou_marginal_cov(sigma, t), x)
    # wavelet route: push the data law forward first, then diffuse
    sigma_w = a @ sigma @ a.T
    r = gaussian_score(ou_marginal_cov(0.5 * (sigma_w + sigma_w.T), t), a @ x)
    return float(np.max(np.abs(r - a @ s)))
