import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mscgm import bbdp
from mscgm.core import Rng
from mscgm.errors import ContractViolationError, InvalidArgumentError, InvalidShapeError


def closed_form_jump(T, t, s):
    """Hand-derived jump coefficients: c_x = 1, c_y = 0, c_eps = (t - s)/t, var = s (t - s)/(T t)."""
    return 1.0, 0.0, (t - s) / t, s * (t - s) / (T * t)


def bayes_posterior_mean(T, t, x_t, x0, y, grid):
    """Numerical p(x_{t-1} | x_t, x0, y) on a grid of x_{t-1} values."""
    m = np.arange(T + 1) / T
    d = np.arange(T + 1) * (T - np.arange(T + 1)) / T**2
    a = (1 - m[t]) / (1 - m[t - 1])
    var_step = d[t] - d[t - 1] * a * a
    prior_mean = (1 - m[t - 1]) * x0 + m[t - 1] * y
    if var_step == 0.0:
        # x_t is pinned to y and carries no information about x_{t-1}
        return float(prior_mean)
    log_prior = -0.5 * (grid - prior_mean) ** 2 / d[t - 1]
    lik_mean = a * grid + (m[t] - a * m[t - 1]) * y
    log_lik = -0.5 * (x_t - lik_mean) ** 2 / var_step
    w = np.exp(log_prior + log_lik - np.max(log_prior + log_lik))
    return float(np.sum(w * grid) / np.sum(w))


class TestSchedule:
    def test_t1000_midpoint(self):
        s = bbdp.make_schedule(1000)
        assert s.m[500] == 0.5
        assert s.delta[500] == 0.25

    def test_T2_coefficients(self):
        s = bbdp.make_schedule(2)
        assert s.delta_step[1] == pytest.approx(0.25, abs=1e-15)
        assert s.delta_post[1] == 0.0
        assert (s.c_x[1], s.c_y[1], s.c_eps[1]) == (1.0, 0.0, 1.0)

    def test_T2_pins_to_y(self):
        s = bbdp.make_schedule(2)
        assert s.delta_step[2] == 0.0
        out = bbdp.one_step_forward(s, np.array([3.0]), np.array([-1.0]), 2, np.array([5.0]))
        assert out[0] == -1.0

    def test_T_below_two(self):
        with pytest.raises(InvalidArgumentError):
            bbdp.make_schedule(1)

    @pytest.mark.parametrize("T", [2, 3, 10, 257])
    def test_invariants(self, T):
        s = bbdp.make_schedule(T)
        t = np.arange(T + 1)
        np.testing.assert_allclose(s.m, t / T, atol=1e-12)
        np.testing.assert_allclose(s.delta, t * (T - t) / T**2, atol=1e-12)
        assert s.delta[0] == s.delta[T] == 0.0
        assert np.max(s.delta) <= 0.25
        for arr in (s.delta, s.delta_step, s.delta_post):
            assert np.all(arr >= 0)
        k = np.arange(2, T + 1)
        np.testing.assert_allclose(s.delta_post[k], s.delta_step[k] * s.delta[k - 1] / np.where(s.delta[k] > 0, s.delta[k], 1.0)
                                   * (s.delta[k] > 0) + s.delta[k - 1] * (s.delta[k] == 0), atol=1e-12)

    @pytest.mark.parametrize("T", [4, 50, 1000])
    def test_coefficients_match_hand_derivation(self, T):
        s = bbdp.make_schedule(T)
        for t in range(1, T + 1):
            cx, cy, ce, var = closed_form_jump(T, t, t - 1)
            assert s.c_x[t] == pytest.approx(cx, abs=1e-12)
            assert s.c_y[t] == pytest.approx(cy, abs=1e-12)
            assert s.c_eps[t] == pytest.approx(ce, abs=1e-12)
            assert s.delta_post[t] == pytest.approx(var, abs=1e-12)
            assert s.delta_step[t] == pytest.approx((T - t) / (T * (T - t + 1)), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 500), st.data())
    def test_jump_coefficients_closed_form(self, T, data):
        t = data.draw(st.integers(1, T))
        s = data.draw(st.integers(0, t - 1))
        np.testing.assert_allclose(bbdp.jump_coefficients(T, t, s), closed_form_jump(T, t, s), atol=1e-12)

    def test_arrays_read_only(self):
        s = bbdp.make_schedule(4)
        with pytest.raises(ValueError):
            s.m[0] = 1.0


class TestForward:
    def setup_method(self):
        self.s = bbdp.make_schedule(10)
        r = Rng(0)
        self.x0, self.y, self.eps = r.randn((3, 6))

    def test_t0_is_x0(self):
        np.testing.assert_array_equal(bbdp.forward_sample(self.s, self.x0, self.y, 0, self.eps), self.x0)

    def test_tT_is_y(self):
        np.testing.assert_allclose(bbdp.forward_sample(self.s, self.x0, self.y, 10, self.eps), self.y, atol=1e-15)

    def test_scalar_midpoint(self):
        s = bbdp.make_schedule(2)
        assert bbdp.forward_sample(s, np.array([0.0]), np.array([1.0]), 1, np.array([0.0]))[0] == 0.5

    def test_shape_mismatch(self):
        with pytest.raises(InvalidShapeError):
            bbdp.forward_sample(self.s, self.x0, self.y[:3], 2, self.eps)

    def test_target_identity(self):
        for t in range(11):
            np.testing.assert_array_equal(
                bbdp.forward_sample(self.s, self.x0, self.y, t, self.eps),
                self.x0 + bbdp.training_target(self.s, self.x0, self.y, t, self.eps))

    def test_target_special_cases(self):
        s = self.s
        np.testing.assert_array_equal(bbdp.training_target(s, self.x0, self.y, 0, self.eps), 0.0)
        np.testing.assert_allclose(bbdp.training_target(s, self.x0, self.y, 4, 0 * self.eps),
                                   0.4 * (self.y - self.x0), atol=1e-15)
        np.testing.assert_allclose(bbdp.training_target(s, self.x0, self.x0, 4, self.eps),
                                   np.sqrt(0.24) * self.eps, atol=1e-15)

    def test_per_sample_timesteps(self):
        x0, y, eps = Rng(1).randn((3, 4, 2))
        t = np.array([0, 3, 7, 10])
        got = bbdp.training_target(self.s, x0, y, t, eps)
        for i in range(4):
            np.testing.assert_allclose(got[i], bbdp.training_target(self.s, x0[i], y[i], int(t[i]), eps[i]))

    def test_one_step_rejects_t0(self):
        with pytest.raises(InvalidArgumentError):
            bbdp.one_step_forward(self.s, self.x0, self.y, 0, self.eps)

    def test_one_step_at_t1_matches_marginal(self):
        np.testing.assert_allclose(bbdp.one_step_forward(self.s, self.x0, self.y, 1, self.eps),
                                   bbdp.forward_sample(self.s, self.x0, self.y, 1, self.eps), atol=1e-15)

    def test_one_step_at_T_returns_y(self):
        out = bbdp.one_step_forward(self.s, self.x0 + 100, self.y, 10, self.eps)
        np.testing.assert_allclose(out, self.y, atol=1e-14)

    def test_mean_telescopes(self):
        T, x0, y = 12, 0.3, -1.1
        s = bbdp.make_schedule(T)
        x = np.array([x0])
        for t in range(1, T + 1):
            x = bbdp.one_step_forward(s, x, np.array([y]), t, np.zeros(1))
            assert abs(x[0] - ((1 - s.m[t]) * x0 + s.m[t] * y)) <= 1e-10

    def test_monte_carlo_T4(self):
        s = bbdp.make_schedule(4)
        r = Rng(42)
        n = 10**5
        x = np.zeros(n)
        for t in (1, 2):
            x = bbdp.one_step_forward(s, x, np.ones(n), t, r.randn((n,)))
        assert abs(x.mean() - 0.5) <= 3 * np.sqrt(0.25 / n)
        assert abs(x.var(ddof=1) - 0.25) <= 3 * 0.25 * np.sqrt(2 / (n - 1))


class TestReverse:
    def test_T2_t1(self):
        s = bbdp.make_schedule(2)
        x1, eps = np.array([0.7]), np.array([0.2])
        out = bbdp.reverse_step(s, x1, np.array([9.0]), 1, eps, noise=np.array([5.0]))
        np.testing.assert_allclose(out, x1 - eps, atol=1e-15)

    def test_rejects_t0(self):
        s = bbdp.make_schedule(4)
        with pytest.raises(InvalidArgumentError):
            bbdp.reverse_step(s, np.zeros(1), np.zeros(1), 0, np.zeros(1))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 300), st.data(), st.integers(0, 2**32 - 1))
    def test_exact_offset_gives_bayes_posterior(self, T, data, seed):
        t = data.draw(st.integers(1, T))
        s = bbdp.make_schedule(T)
        x0, y, eps = Rng(seed).randn((3, 5))
        x_t = bbdp.forward_sample(s, x0, y, t, eps)
        target = bbdp.training_target(s, x0, y, t, eps)
        got = bbdp.reverse_step(s, x_t, y, t, target)
        np.testing.assert_allclose(got, bbdp.posterior_mean_x0(s, x_t, x0, y, t), atol=1e-10)

    @pytest.mark.parametrize("t", [1, 2, 3, 4])
    def test_numerical_bayes_on_grid(self, t):
        T = 4
        s = bbdp.make_schedule(T)
        x0, y = 0.4, -0.6
        eps = 0.8
        x_t = float(bbdp.forward_sample(s, np.array([x0]), np.array([y]), t, np.array([eps]))[0])
        got = float(bbdp.reverse_step(s, np.array([x_t]), np.array([y]), t, np.array([x_t - x0]))[0])
        if s.delta[t - 1] == 0.0:
            assert got == pytest.approx(x0, abs=1e-12)
            return
        grid = np.linspace(-4, 4, 20001)
        assert got == pytest.approx(bayes_posterior_mean(T, t, x_t, x0, y, grid), abs=1e-3)

    def test_numerical_bayes_201_point_x0_prior(self):
        # x0 uniform on a 201-point grid: the predictor-form mean, averaged
        # under p(x0 | x_t, y), equals the brute-force marginal posterior mean
        T, t, y, x_t = 4, 2, 0.3, -0.2
        s = bbdp.make_schedule(T)
        x0s = np.linspace(-2, 2, 201)
        lik = np.exp(-0.5 * (x_t - (1 - s.m[t]) * x0s - s.m[t] * y) ** 2 / s.delta[t])
        w = lik / lik.sum()
        means = np.array([bbdp.reverse_step(s, np.array([x_t]), np.array([y]), t, np.array([x_t - a]))[0] for a in x0s])
        grid = np.linspace(-4, 4, 8001)
        brute = sum(wi * bayes_posterior_mean(T, t, x_t, a, y, grid) for wi, a in zip(w, x0s))
        assert float(np.sum(w * means)) == pytest.approx(brute, abs=1e-3)


class TestGrid:
    def test_full(self):
        np.testing.assert_array_equal(bbdp.make_grid(5, 5), [5, 4, 3, 2, 1])

    @pytest.mark.parametrize("n", [2, 4, 16, 64, 256])
    def test_reduced(self, n):
        g = bbdp.make_grid(1000, n)
        assert g[0] == 1000 and g[-1] == 1 and len(g) == n
        assert np.all(np.diff(g) < 0)

    def test_bad_grid(self):
        with pytest.raises(InvalidArgumentError):
            bbdp.check_grid(10, [10, 5, 5, 1])
        with pytest.raises(InvalidArgumentError):
            bbdp.check_grid(10, [9, 1])


class TestSample:
    def setup_method(self):
        r = Rng(3)
        self.x0 = r.randn((2, 1, 4, 4))
        self.y = r.randn((2, 1, 4, 4))

    def oracle(self, x, y, t, frac):
        return x - self.x0

    @pytest.mark.parametrize("T,n", [(200, None), (200, 17), (1000, 4)])
    def test_oracle_recovery(self, T, n):
        s = bbdp.make_schedule(T)
        grid = None if n is None else bbdp.make_grid(T, n)
        out = bbdp.sample(s, self.oracle, self.y, grid, Rng(1))
        assert np.max(np.abs(out - self.x0)) <= 1e-6

    def test_two_step_grid(self):
        s = bbdp.make_schedule(50)
        out = bbdp.sample(s, lambda x, y, t, f: np.zeros_like(x), self.y, [50, 1], Rng(0))
        assert out.shape == self.y.shape and np.all(np.isfinite(out))

    def test_constant_symmetry(self):
        s = bbdp.make_schedule(20)
        y = np.full((1, 1, 4, 4), 0.3)
        out = bbdp.sample(s, lambda x, yy, t, f: np.zeros_like(x), y)
        assert np.ptp(out) == 0.0

    def test_predictor_shape_contract(self):
        s = bbdp.make_schedule(5)
        with pytest.raises(ContractViolationError):
            bbdp.sample(s, lambda x, y, t, f: x[:1], self.y)

    def test_predictor_receives_index_and_fraction(self):
        seen = []
        s = bbdp.make_schedule(8)
        bbdp.sample(s, lambda x, y, t, f: (seen.append((t, f)), np.zeros_like(x))[1], self.y, [8, 4, 1])
        assert seen == [(8, 1.0), (4, 0.5), (1, 0.125)]

    def test_trace_counts(self):
        s = bbdp.make_schedule(8)
        trace = {}
        bbdp.sample(s, self.oracle, self.y, [8, 3, 1], trace=trace)
        assert trace["pixels"] == [32, 32, 32]
