"""Compare the numba and pure-numpy versions of the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run once untimed (JIT warm-up), outputs of both paths are
checked for agreement, then the best of ``--repeat`` timings is reported.
"""

import argparse
import time
import zlib

import numpy as np

from mscgm import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((48, 48))
    sym = a + a.T
    u = _kernels.splitmix_uniform(12345, 0, 1 << 20, use_numba=False)
    h, w, bpp = 256, 256, 3
    rows = rng.integers(0, 256, (h, w * bpp), dtype=np.uint8)
    filt = (np.arange(h) % 5).astype(np.uint8)[:, None]
    raw = np.frombuffer(zlib.decompress(zlib.compress(np.concatenate([filt, rows], 1).tobytes())), np.uint8)
    return {
        "splitmix_uniform (1M)": lambda nb: _kernels.splitmix_uniform(12345, 0, 1 << 20, use_numba=nb),
        "box_muller (1M)": lambda nb: _kernels.box_muller(u, use_numba=nb),
        "jacobi_eigh (48x48)": lambda nb: _kernels.jacobi_eigh(sym, use_numba=nb)[0],
        "png_unfilter (256x256 RGB)": lambda nb: _kernels.png_unfilter(raw, h, w * bpp, bpp, use_numba=nb),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"backend: {_kernels.backend()}")
    if not _kernels.HAVE_NUMBA:
        print("numba unavailable or disabled; only the numpy path is timed")
    print(f"{'kernel':<28} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>8}")
    for name, fn in cases().items():
        ref = fn(False)
        t_np = best_of(lambda: fn(False), args.repeat)
        if _kernels.HAVE_NUMBA:
            got = fn(True)
            np.testing.assert_allclose(np.sort(np.ravel(got)), np.sort(np.ravel(ref)), rtol=1e-10, atol=1e-10)
            t_nb = best_of(lambda: fn(True), args.repeat)
            print(f"{name:<28} {1e3 * t_np:12.2f} {1e3 * t_nb:12.2f} {t_np / t_nb:8.1f}x")
        else:
            print(f"{name:<28} {1e3 * t_np:12.2f} {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
