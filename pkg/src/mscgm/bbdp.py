"""Brownian-bridge diffusion between a target x0 (t=0) and a condition y (t=T).

Marginal:        x_t = (1 - m_t) x0 + m_t y + sqrt(delta_t) eps
                 m_t = t / T,  delta_t = t (T - t) / T^2
One step:        x_t | x_{t-1} ~ N(a_t x_{t-1} + (m_t - a_t m_{t-1}) y, delta_{t|t-1})
                 a_t = (1 - m_t) / (1 - m_{t-1})
                 delta_{t|t-1} = delta_t - delta_{t-1} a_t^2
Reverse step:    x_{t-1} = c_x x_t + c_y y - c_eps eps_hat + sqrt(delta'_t) z

The predictor regresses the bridge offset ``x_t - x0 = m_t (y - x0) +
sqrt(delta_t) eps``.  Reverse coefficients are computed for an arbitrary
jump t -> s < t (the bridge is Markov with a closed-form transition between
any two times), which is what reduced-step sampling uses.  At t = T the
ratios delta_s / delta_T are 0/0; their limits are used there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Rng
from .errors import ContractViolationError, InvalidArgumentError, InvalidShapeError


@dataclass(frozen=True)
class BridgeSchedule:
    T: int
    m: np.ndarray
    delta: np.ndarray
    delta_step: np.ndarray
    c_x: np.ndarray
    c_y: np.ndarray
    c_eps: np.ndarray
    delta_post: np.ndarray

    def check_step(self, t, lo=0):
        if int(t) != t or not lo <= t <= self.T:
            raise InvalidArgumentError(f"timestep {t} outside {lo}..{self.T}")
        return int(t)


def _bridge_mean_weight(T, t, s):
    """(1 - m_t) / (1 - m_s): weight of x_s in the mean of x_t | x_s."""
    return (1.0 - t / T) / (1.0 - s / T)


def transition_variance(T: int, t: int, s: int) -> float:
    """delta_{t|s} = delta_t - delta_s ((1 - m_t)/(1 - m_s))^2 for s < t."""
    dt = t * (T - t) / T**2
    ds = s * (T - s) / T**2
    return max(dt - ds * _bridge_mean_weight(T, t, s) ** 2, 0.0)


def jump_coefficients(T: int, t: int, s: int) -> tuple[float, float, float, float]:
    """(c_x, c_y, c_eps, posterior variance) for the reverse jump t -> s."""
    if not 0 <= s < t <= T:
        raise InvalidArgumentError(f"reverse jump needs 0 <= s < t <= T, got t={t}, s={s}, T={T}")
    m_t, m_s = t / T, s / T
    d_t = t * (T - t) / T**2
    d_s = s * (T - s) / T**2
    d_ts = transition_variance(T, t, s)
    if d_t > 0.0:
        r_x = d_s / d_t * (1.0 - m_t) / (1.0 - m_s)
        r_0 = (1.0 - m_s) * d_ts / d_t
        var = d_ts * d_s / d_t
    else:
        # t == T: x_T = y carries no information about x_s
        r_x = s / t
        r_0 = (t - s) / t
        var = d_s
    c_x = r_x + r_0
    c_y = m_s - m_t * r_x
    c_eps = r_0
    return c_x, c_y, c_eps, max(var, 0.0)


def make_schedule(T: int) -> BridgeSchedule:
    if int(T) != T or T < 2:
        raise InvalidArgumentError(f"T must be an integer >= 2, got {T}")
    T = int(T)
    t = np.arange(T + 1, dtype=np.float64)
    m = t / T
    delta = t * (T - t) / T**2
    delta_step = np.zeros(T + 1)
    c_x = np.zeros(T + 1)
    c_y = np.zeros(T + 1)
    c_eps = np.zeros(T + 1)
    delta_post = np.zeros(T + 1)
    for k in range(1, T + 1):
        delta_step[k] = transition_variance(T, k, k - 1)
        c_x[k], c_y[k], c_eps[k], delta_post[k] = jump_coefficients(T, k, k - 1)
    for arr in (m, delta, delta_step, c_x, c_y, c_eps, delta_post):
        arr.setflags(write=False)
    return BridgeSchedule(T, m, delta, delta_step, c_x, c_y, c_eps, delta_post)


def _same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise InvalidShapeError(f"shape mismatch: {sorted(shapes)}")


def forward_sample(sched: BridgeSchedule, x0, y, t, eps):
    """x_t = x0 + m_t (y - x0) + sqrt(delta_t) eps."""
    _same_shape(x0, y, eps)
    x0 = np.asarray(x0)
    return x0 + training_target(sched, x0, y, t, eps)


def training_target(sched: BridgeSchedule, x0, y, t, eps):
    """m_t (y - x0) + sqrt(delta_t) eps, the quantity the predictor regresses."""
    _same_shape(x0, y, eps)
    t = np.asarray(t)
    x0, y, eps = np.asarray(x0), np.asarray(y), np.asarray(eps)
    if t.ndim == 0:
        t = sched.check_step(int(t))
        m, d = sched.m[t], sched.delta[t]
    else:
        # per-sample timesteps along the leading axis
        if t.shape[0] != x0.shape[0]:
            raise InvalidShapeError(f"{t.shape[0]} timesteps for a batch of {x0.shape[0]}")
        if np.any(t < 0) or np.any(t > sched.T):
            raise InvalidArgumentError(f"timesteps outside 0..{sched.T}")
        bshape = (-1,) + (1,) * (x0.ndim - 1)
        m = sched.m[t].reshape(bshape)
        d = sched.delta[t].reshape(bshape)
    return (m * (y - x0) + np.sqrt(d) * eps).astype(np.result_type(x0, y, eps), copy=False)


def one_step_forward(sched: BridgeSchedule, x_prev, y, t, eps):
    """Draw x_t given x_{t-1} with the one-step bridge kernel."""
    t = sched.check_step(t, lo=1)
    _same_shape(x_prev, y, eps)
    T = sched.T
    a = _bridge_mean_weight(T, t, t - 1)
    b = sched.m[t] - a * sched.m[t - 1]
    return a * np.asarray(x_prev) + b * np.asarray(y) + np.sqrt(sched.delta_step[t]) * np.asarray(eps)


def posterior_mean_x0(sched: BridgeSchedule, x_t, x0, y, t):
    """Bayes posterior mean of x_{t-1} given (x_t, x0, y), written in x0 (no predictor)."""
    t = sched.check_step(t, lo=1)
    T = sched.T
    m_t, m_p = sched.m[t], sched.m[t - 1]
    d_t, d_p, d_step = sched.delta[t], sched.delta[t - 1], sched.delta_step[t]
    if d_t == 0.0:
        return (1.0 - m_p) * np.asarray(x0) + m_p * np.asarray(y)
    w = d_p / d_t * (1.0 - m_t) / (1.0 - m_p)
    return (w * np.asarray(x_t) + (1.0 - m_p) * d_step / d_t * np.asarray(x0)
            + (m_p - m_t * w) * np.asarray(y))


def reverse_jump(sched: BridgeSchedule, x_t, y, t, s, eps_pred, noise=None):
    """x_s from x_t for any s < t, using the predicted bridge offset."""
    t = sched.check_step(t, lo=1)
    s = sched.check_step(s)
    _same_shape(x_t, y, eps_pred)
    c_x, c_y, c_eps, var = jump_coefficients(sched.T, t, s)
    out = c_x * np.asarray(x_t) + c_y * np.asarray(y) - c_eps * np.asarray(eps_pred)
    if noise is not None and var > 0.0:
        _same_shape(x_t, noise)
        out = out + np.sqrt(var) * np.asarray(noise)
    return out


def reverse_step(sched: BridgeSchedule, x_t, y, t, eps_pred, noise=None):
    """One ancestral step t -> t-1; noise is ignored at t = 1."""
    t = sched.check_step(t, lo=1)
    if t == 1:
        noise = None
    return reverse_jump(sched, x_t, y, t, t - 1, eps_pred, noise)


def make_grid(T: int, n_steps: int) -> np.ndarray:
    """Uniformly spaced strictly decreasing timesteps from T down to 1."""
    if n_steps < 1:
        raise InvalidArgumentError(f"n_steps must be >= 1, got {n_steps}")
    if n_steps >= T:
        return np.arange(T, 0, -1, dtype=np.int64)
    if n_steps == 1:
        raise InvalidArgumentError("a grid needs at least 2 steps to contain both T and 1")
    grid = np.unique(np.round(np.linspace(1, T, n_steps)).astype(np.int64))[::-1]
    return check_grid(T, grid)


def check_grid(T: int, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.int64)
    if grid.ndim != 1 or grid.size < 1:
        raise InvalidArgumentError("grid must be a non-empty 1-D sequence")
    if grid[0] != T or grid[-1] != 1:
        raise InvalidArgumentError(f"grid must start at T={T} and end at 1, got {grid[0]}..{grid[-1]}")
    if np.any(np.diff(grid) >= 0):
        raise InvalidArgumentError("grid must be strictly decreasing")
    return grid


def sample(sched: BridgeSchedule, eps_model, y, grid=None, rng: Rng | None = None, *,
           x_init=None, trace: dict | None = None):
    """Run the reverse chain from x_T = y down to an x0 estimate.

    ``eps_model(x_t, y, t_index, t_frac)`` returns the predicted offset with
    x_t's shape; ``t_index`` is the integer step and ``t_frac = t / T``.
    ``rng`` supplies the ancestral noise; ``None`` runs the posterior-mean
    path.  When ``trace`` is given, per-step element counts seen by the
    predictor are appended under ``"pixels"``.
    """
    T = sched.T
    grid = np.arange(T, 0, -1) if grid is None else check_grid(T, grid)
    y = np.asarray(y)
    x = y.copy() if x_init is None else np.array(x_init, copy=True)
    steps = list(grid) + [0]
    for t, s in zip(steps[:-1], steps[1:]):
        t, s = int(t), int(s)
        eps = eps_model(x, y, t, t / T)
        if np.shape(eps) != x.shape:
            raise ContractViolationError(f"predictor returned shape {np.shape(eps)} for input {x.shape}")
        if trace is not None:
            trace.setdefault("pixels", []).append(int(x.size))
        noise = None
        if rng is not None and s > 0:
            noise = rng.randn(x.shape, dtype=x.dtype)
        x = reverse_jump(sched, x, y, t, s, eps, noise).astype(y.dtype, copy=False)
    return x
