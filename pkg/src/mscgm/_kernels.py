"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

The numba path is used when numba imports cleanly and the environment
variable ``MSCGM_DISABLE_NUMBA`` is unset (or ``0``).  Both paths implement
the same arithmetic in the same order so results agree to the last bit for
the integer kernels and to rounding for the floating-point ones.
"""

from __future__ import annotations

import math
import os

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO_POW_M53 = 1.0 / 9007199254740992.0


def _numba_requested() -> bool:
    flag = os.environ.get("MSCGM_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by MSCGM_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# counter-based uniforms (splitmix64 finalizer over key + counter * golden)
# ---------------------------------------------------------------------------


def _splitmix_uniform_np(key: int, counter: int, n: int) -> np.ndarray:
    idx = np.arange(n, dtype=np.uint64) + np.uint64(counter)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + (idx + np.uint64(1)) * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_M53


def _box_muller_np(u: np.ndarray) -> np.ndarray:
    u1 = u[0::2]
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * math.pi * u2
    out = np.empty_like(u)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out


def _jacobi_eigh_np(a: np.ndarray, tol: float, max_sweeps: int):
    a = a.copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = math.sqrt(float(np.sum(a * a)))
    sweeps = 0
    if scale == 0.0:
        return np.diag(a).copy(), v, 0
    for sweeps in range(1, max_sweeps + 1):
        off = math.sqrt(max(float(np.sum(a * a) - np.sum(np.diag(a) ** 2)), 0.0))
        if off <= tol * scale:
            sweeps -= 1
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v, sweeps


def _png_unfilter_np(raw: np.ndarray, height: int, stride: int, bpp: int) -> np.ndarray:
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int64)
    pos = 0
    for row in range(height):
        ftype = int(raw[pos])
        line = raw[pos + 1 : pos + 1 + stride].astype(np.int64)
        pos += 1 + stride
        if ftype == 0:
            cur = line
        elif ftype == 1:
            cur = line.copy()
            for i in range(bpp, stride):
                cur[i] = (cur[i] + cur[i - bpp]) & 0xFF
        elif ftype == 2:
            cur = (line + prev) & 0xFF
        elif ftype == 3:
            cur = line.copy()
            for i in range(stride):
                left = cur[i - bpp] if i >= bpp else 0
                cur[i] = (cur[i] + ((left + prev[i]) >> 1)) & 0xFF
        elif ftype == 4:
            cur = line.copy()
            for i in range(stride):
                a = cur[i - bpp] if i >= bpp else 0
                b = prev[i]
                c = prev[i - bpp] if i >= bpp else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                if pa <= pb and pa <= pc:
                    pred = a
                elif pb <= pc:
                    pred = b
                else:
                    pred = c
                cur[i] = (cur[i] + pred) & 0xFF
        else:
            raise ValueError(f"unknown PNG filter type {ftype} on row {row}")
        out[row] = cur
        prev = cur
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _splitmix_uniform_nb(key, counter, n):
        out = np.empty(n, dtype=np.float64)
        k = np.uint64(key)
        g = np.uint64(0x9E3779B97F4A7C15)
        m1 = np.uint64(0xBF58476D1CE4E5B9)
        m2 = np.uint64(0x94D049BB133111EB)
        for i in range(n):
            z = k + (np.uint64(counter) + np.uint64(i) + np.uint64(1)) * g
            z = (z ^ (z >> np.uint64(30))) * m1
            z = (z ^ (z >> np.uint64(27))) * m2
            z = z ^ (z >> np.uint64(31))
            out[i] = (np.float64(z >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)
        return out

    @njit(cache=True)
    def _box_muller_nb(u):
        out = np.empty_like(u)
        for i in range(0, u.shape[0], 2):
            r = math.sqrt(-2.0 * math.log(u[i]))
            theta = 2.0 * math.pi * u[i + 1]
            out[i] = r * math.cos(theta)
            out[i + 1] = r * math.sin(theta)
        return out

    @njit(cache=True)
    def _jacobi_eigh_nb(a_in, tol, max_sweeps):
        a = a_in.copy()
        n = a.shape[0]
        v = np.eye(n)
        total = 0.0
        for i in range(n):
            for j in range(n):
                total += a[i, j] * a[i, j]
        scale = math.sqrt(total)
        sweeps = 0
        if scale == 0.0:
            return np.diag(a).copy(), v, 0
        for sweep in range(1, max_sweeps + 1):
            off = 0.0
            for i in range(n):
                for j in range(n):
                    if i != j:
                        off += a[i, j] * a[i, j]
            if math.sqrt(off) <= tol * scale:
                break
            sweeps = sweep
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                    c = 1.0 / math.sqrt(t * t + 1.0)
                    s = t * c
                    for k in range(n):
                        akp = a[k, p]
                        akq = a[k, q]
                        a[k, p] = c * akp - s * akq
                        a[k, q] = s * akp + c * akq
                    for k in range(n):
                        apk = a[p, k]
                        aqk = a[q, k]
                        a[p, k] = c * apk - s * aqk
                        a[q, k] = s * apk + c * aqk
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    for k in range(n):
                        vkp = v[k, p]
                        vkq = v[k, q]
                        v[k, p] = c * vkp - s * vkq
                        v[k, q] = s * vkp + c * vkq
        return np.diag(a).copy(), v, sweeps

    @njit(cache=True)
    def _png_unfilter_nb(raw, height, stride, bpp):
        out = np.zeros((height, stride), dtype=np.uint8)
        pos = 0
        for row in range(height):
            ftype = raw[pos]
            pos += 1
            for i in range(stride):
                x = np.int64(raw[pos + i])
                a = np.int64(out[row, i - bpp]) if i >= bpp else np.int64(0)
                b = np.int64(out[row - 1, i]) if row > 0 else np.int64(0)
                c = np.int64(out[row - 1, i - bpp]) if (row > 0 and i >= bpp) else np.int64(0)
                if ftype == 0:
                    pred = np.int64(0)
                elif ftype == 1:
                    pred = a
                elif ftype == 2:
                    pred = b
                elif ftype == 3:
                    pred = (a + b) >> 1
                elif ftype == 4:
                    p = a + b - c
                    pa = abs(p - a)
                    pb = abs(p - b)
                    pc = abs(p - c)
                    if pa <= pb and pa <= pc:
                        pred = a
                    elif pb <= pc:
                        pred = b
                    else:
                        pred = c
                else:
                    raise ValueError("unknown PNG filter type")
                out[row, i] = (x + pred) & 0xFF
            pos += stride
        return out


def splitmix_uniform(key: int, counter: int, n: int, use_numba: bool | None = None) -> np.ndarray:
    """``n`` uniforms in (0, 1) for counters ``counter .. counter + n - 1``."""
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if use_numba:
        return _splitmix_uniform_nb(np.uint64(key), np.uint64(counter), n)
    return _splitmix_uniform_np(key, counter, n)


def box_muller(u: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    """Pairwise Box-Muller; ``len(u)`` must be even."""
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if use_numba:
        return _box_muller_nb(u)
    return _box_muller_np(u)


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100, use_numba: bool | None = None):
    """Cyclic Jacobi on a symmetric float64 matrix -> (diag, V, sweeps), unsorted."""
    if use_numba is None:
        use_numba = HAVE_NUMBA
    a = np.ascontiguousarray(a, dtype=np.float64)
    if use_numba:
        return _jacobi_eigh_nb(a, tol, max_sweeps)
    return _jacobi_eigh_np(a, tol, max_sweeps)


def png_unfilter(raw: np.ndarray, height: int, stride: int, bpp: int, use_numba: bool | None = None) -> np.ndarray:
    """Undo per-scanline PNG filtering; ``raw`` is the inflated IDAT stream."""
    if use_numba is None:
        use_numba = HAVE_NUMBA
    raw = np.ascontiguousarray(raw, dtype=np.uint8)
    if raw.size != height * (stride + 1):
        raise ValueError(f"inflated image data has {raw.size} bytes, expected {height * (stride + 1)}")
    if use_numba:
        return _png_unfilter_nb(raw, height, stride, bpp)
    return _png_unfilter_np(raw, height, stride, bpp)
