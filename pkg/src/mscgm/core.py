"""Tensors, seeded Gaussian sampling and the symmetric eigensolver.

Tensors are plain ``numpy.ndarray`` values restricted to float32/float64.
Random draws go through :class:`Rng`, a counter-based generator whose stream
depends only on ``(seed, counter)`` so that any draw can be reproduced from
the seed and the number of values consumed before it.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import _kernels
from .errors import DomainError, InvalidArgumentError, InvalidShapeError

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_MASK64 = (1 << 64) - 1


def as_tensor(x, dtype=None, *, check_finite: bool = False, name: str = "tensor") -> np.ndarray:
    """Coerce ``x`` to a float32/float64 array; optionally reject NaN/Inf."""
    arr = np.asarray(x)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype not in FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    if arr.dtype not in FLOAT_DTYPES:
        raise InvalidArgumentError(f"{name}: dtype {arr.dtype} is not float32/float64")
    if check_finite and not np.all(np.isfinite(arr)):
        raise DomainError(f"{name}: contains NaN or Inf")
    return arr


def _mix64(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class Rng:
    """Counter-based generator: splitmix64 uniforms, Box-Muller normals.

    Every draw consumes a contiguous block of counters, so two generators
    created with the same seed and asked for the same sequence of shapes
    produce identical values.
    """

    def __init__(self, seed: int = 0, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.counter = int(counter)
        self._key = _mix64(self.seed ^ 0x6A09E667F3BCC908)

    def __repr__(self):
        return f"Rng(seed={self.seed}, counter={self.counter})"

    def state(self) -> tuple[int, int]:
        return self.seed, self.counter

    def spawn(self, stream: int) -> "Rng":
        """Independent child generator; does not advance this one."""
        return Rng(_mix64(self.seed * 0x100000001B3 + int(stream) + 1))

    def uniform(self, shape=()) -> np.ndarray:
        shape = _check_shape(shape, allow_scalar=True)
        n = int(np.prod(shape, dtype=np.int64))
        u = _kernels.splitmix_uniform(self._key, self.counter, n)
        self.counter += n
        return u.reshape(shape)

    def randn(self, shape, dtype=np.float64) -> np.ndarray:
        return randn(self, shape, dtype=dtype)

    def integers(self, low: int, high: int, size=()) -> np.ndarray:
        """Integers uniform on ``[low, high)``."""
        if high <= low:
            raise InvalidArgumentError(f"empty integer range [{low}, {high})")
        u = self.uniform(size)
        out = low + np.floor(u * (high - low)).astype(np.int64)
        return np.minimum(out, high - 1)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform((n,)), kind="stable")


def _check_shape(shape, allow_scalar=False) -> tuple:
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    shape = tuple(int(s) for s in shape)
    if not shape and not allow_scalar:
        raise InvalidShapeError("shape must have at least one extent")
    if any(s < 1 for s in shape):
        raise InvalidShapeError(f"shape {shape} has an extent < 1")
    return shape


def randn(rng: Rng, shape, dtype=np.float64) -> np.ndarray:
    """I.i.d. standard normal tensor; advances ``rng`` by an even number of counters."""
    shape = _check_shape(shape)
    n = int(np.prod(shape, dtype=np.int64))
    m = n + (n & 1)
    u = _kernels.splitmix_uniform(rng._key, rng.counter, m)
    rng.counter += m
    z = _kernels.box_muller(u)[:n]
    return z.reshape(shape).astype(dtype, copy=False)


def eigh_sym(m, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, v)`` with ``w`` ascending and ``v[:, i]`` the unit
    eigenvector for ``w[i]``.
    """
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidShapeError(f"eigh_sym needs a square matrix, got shape {a.shape}")
    if a.shape[0] > 4096:
        raise InvalidShapeError(f"dimension {a.shape[0]} exceeds 4096")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix contains NaN or Inf")
    norm = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-9 * max(norm, np.finfo(float).tiny):
        raise DomainError("matrix is not symmetric within 1e-9 relative")
    a = 0.5 * (a + a.T)
    w, v, sweeps = _kernels.jacobi_eigh(a, tol=tol, max_sweeps=max_sweeps)
    if sweeps >= max_sweeps:
        warnings.warn(f"Jacobi eigensolver hit the sweep limit ({max_sweeps})", RuntimeWarning, stacklevel=2)
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]
