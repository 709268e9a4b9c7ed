"""Self-verification suites run by ``mscgm verify``.

Each check returns a :class:`CheckResult`; a suite passes when all of its
checks do.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import bbdp, stats, wavelet
from .core import Rng
from .nn.gradcheck import check_layer, random_layer_cases


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: float
    tolerance: float
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.suite}/{self.name}: {self.value:.3e} (tolerance {self.tolerance:.1e})"


def _timed(suite, name, tol, fn, lower_is_better=True):
    t0 = time.perf_counter()
    v = float(fn())
    ok = v <= tol if lower_is_better else v >= tol
    return CheckResult(suite, name, bool(ok), v, tol, time.perf_counter() - t0)


# -- wavelet ------------------------------------------------------------------


def _wavelet_recon(rng):
    worst = 0.0
    for i in range(20):
        levels = 1 + i % 3
        img = rng.randn((8 * 2**levels, 16 * 2**levels, 1 + i % 3))
        worst = max(worst, np.max(np.abs(wavelet.reconstruct(wavelet.decompose(img, levels)) - img)))
    return worst


def _wavelet_energy(rng):
    worst = 0.0
    for levels in (1, 2, 3):
        img = rng.randn((32, 32))
        e = float(np.sum(img * img))
        worst = max(worst, abs(wavelet.decompose(img, levels).energy() - e) / e)
    return worst


def _wavelet_orthogonality():
    a = wavelet.haar_matrix(8, 8, 2)
    return np.max(np.abs(a @ a.T - np.eye(64)))


def _haar_hand_example():
    b = wavelet.dwt2(np.array([[1.0, 2.0], [3.0, 4.0]]))
    got = np.array([b.ll[0, 0], b.lh[0, 0], b.hl[0, 0], b.hh[0, 0]])
    return np.max(np.abs(got - np.array([5.0, -1.0, -2.0, 0.0])))


def suite_wavelet(seed=0):
    rng = Rng(seed)
    return [
        _timed("wavelet", "perfect_reconstruction", 1e-10, lambda: _wavelet_recon(rng)),
        _timed("wavelet", "energy_conservation", 1e-12, lambda: _wavelet_energy(rng)),
        _timed("wavelet", "orthogonality", 1e-12, _wavelet_orthogonality),
        _timed("wavelet", "hand_example", 0.0, _haar_hand_example),
    ]


# -- bridge -------------------------------------------------------------------


def marginal_zscore(T, n, rng, x0=0.7, y=-0.4):
    """Worst |z| of chained one-step marginals against the closed-form bridge marginal."""
    sched = bbdp.make_schedule(T)
    x = np.full(n, x0)
    worst = 0.0
    for t in range(1, T + 1):
        x = bbdp.one_step_forward(sched, x, np.full(n, y), t, rng.randn((n,)))
        mean = (1 - sched.m[t]) * x0 + sched.m[t] * y
        var = sched.delta[t]
        if var == 0.0:
            worst = max(worst, np.max(np.abs(x - mean)) / 1e-12)
            continue
        se_mean = np.sqrt(var / n)
        se_var = var * np.sqrt(2.0 / (n - 1))
        worst = max(worst, abs(x.mean() - mean) / se_mean, abs(x.var(ddof=1) - var) / se_var)
    return worst


def posterior_form_gap(rng, count=2000):
    """Max gap between the predictor-form reverse mean and the Bayes posterior written in x0."""
    worst = 0.0
    for _ in range(count):
        T = int(rng.integers(2, 200, 1)[0])
        t = int(rng.integers(1, T + 1, 1)[0])
        sched = bbdp.make_schedule(T)
        x0, y, x_t = rng.randn((3,))
        if t == T:
            x_t = y  # the bridge is pinned at its terminal end
        offset = x_t - x0
        a = bbdp.reverse_step(sched, np.array([x_t]), np.array([y]), t, np.array([offset]))
        b = bbdp.posterior_mean_x0(sched, np.array([x_t]), np.array([x0]), np.array([y]), t)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


def oracle_recovery(rng, T=50, n_steps=None):
    """Reverse loop driven by the exact offset returns x0."""
    sched = bbdp.make_schedule(T)
    x0 = rng.randn((4, 1, 4, 4))
    y = rng.randn((4, 1, 4, 4))
    out = bbdp.sample(sched, lambda x, yy, t, f: x - x0, y, bbdp.make_grid(T, n_steps or T), rng)
    return np.max(np.abs(out - x0))


def endpoint_pinning(rng):
    sched = bbdp.make_schedule(10)
    x0, y, eps = rng.randn((3, 5))
    gap0 = np.max(np.abs(bbdp.forward_sample(sched, x0, y, 0, eps) - x0))
    gapT = np.max(np.abs(bbdp.forward_sample(sched, x0, y, 10, eps) - y))
    return max(gap0, gapT)


def suite_bbdp(seed=0):
    rng = Rng(seed)
    return [
        _timed("bbdp", "marginal_consistency_T10", 4.0, lambda: marginal_zscore(10, 20000, rng)),
        _timed("bbdp", "posterior_oracle", 1e-10, lambda: posterior_form_gap(rng)),
        _timed("bbdp", "endpoint_pinning", 1e-15, lambda: endpoint_pinning(rng)),
        _timed("bbdp", "oracle_recovery", 1e-8, lambda: oracle_recovery(rng)),
        _timed("bbdp", "oracle_recovery_10_steps", 1e-8, lambda: oracle_recovery(rng, 50, 10)),
    ]


# -- gradients ----------------------------------------------------------------


def suite_grad(seed=0, repeats=3):
    out = []
    for rep in range(repeats):
        rng = Rng(seed).spawn(rep)
        for name, layer, inputs, diff in random_layer_cases(rng):
            out.append(_timed("grad", f"{name}#{rep}", 1e-4, lambda: check_layer(layer, inputs, rng, diff_inputs=diff)))
    return out


# -- duality ------------------------------------------------------------------


def random_spd(rng, d):
    a = rng.randn((d, d))
    return a @ a.T / d + 0.05 * np.eye(d)


def duality_worst(rng, count=100, d=16):
    worst = 0.0
    side = int(np.sqrt(d))
    for _ in range(count):
        sigma = random_spd(rng, d)
        t = float(0.01 + 3.0 * rng.uniform(1)[0])
        x = rng.randn((side, side))
        worst = max(worst, stats.duality_check(sigma, t, x))
    return worst


def suite_duality(seed=0):
    rng = Rng(seed)
    return [
        _timed("duality", "random_gaussian_d16", 1e-8, lambda: duality_worst(rng)),
        _timed("duality", "isotropic", 1e-10,
               lambda: stats.duality_check(np.eye(16), 0.5, rng.randn((4, 4)))),
    ]


SUITES = {"wavelet": suite_wavelet, "bbdp": suite_bbdp, "grad": suite_grad, "duality": suite_duality}


def run(suite="all", seed=0):
    names = list(SUITES) if suite == "all" else [suite]
    results = []
    for n in names:
        results.extend(SUITES[n](seed))
    return results


def network_checks(seed=0):
    """Finite-difference checks of float64 miniatures of the three networks."""
    from .nn import (DiscriminatorConfig, GeneratorConfig, UNetConfig, build_discriminator, build_eps_unet,
                     build_generator)
    from .nn.gradcheck import check_network

    rng = Rng(seed).spawn(99)
    unet = build_eps_unet(UNetConfig(base=4, groups=2, heads=2, temb_dim=8, seed=seed)).astype(np.float64)
    gen = build_generator(GeneratorConfig(base=4, groups=2, seed=seed)).astype(np.float64)
    crit = build_discriminator(DiscriminatorConfig(base=2, blocks=2, dense=4, seed=seed)).astype(np.float64)
    for net in (unet, gen):
        # zero-initialized convolutions would hide their inputs' gradients
        for p in net.parameters():
            if not np.any(p):
                p[...] = 0.1 * rng.randn(p.shape)
    cases = [
        ("eps_unet", unet, {"x_t": rng.randn((2, 1, 4, 4)), "y": rng.randn((2, 1, 4, 4)),
                            "t": np.array([3, 40])}, ("x_t", "y")),
        ("generator", gen, {"x_l": rng.randn((2, 1, 4, 4)), "y_h": rng.randn((2, 3, 4, 4)),
                            "z": rng.randn((2, 1, 4, 4)), "scale": np.full((2, 1, 4, 4), 0.5)},
         ("x_l", "y_h", "z")),
        ("critic", crit, {"x_h": rng.randn((2, 4, 8, 8))}, ("x_h",)),
    ]
    return [_timed("grad", f"network_{name}", 1e-4, lambda: check_network(net, inputs, rng, diff_inputs=diff))
            for name, net, inputs, diff in cases]
