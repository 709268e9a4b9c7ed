import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mscgm.core import Rng
from mscgm.errors import InvalidArgumentError, InvalidShapeError
from mscgm.wavelet import SubbandPyramid, SubbandSet, decompose, dwt2, haar_matrix, idwt2, reconstruct


def naive_dwt2(x):
    """Row filtering then column filtering with explicit 1/sqrt(2) taps."""
    r = 1.0 / np.sqrt(2.0)
    lo = (x[:, 0::2] + x[:, 1::2]) * r  # row low-pass
    hi = (x[:, 0::2] - x[:, 1::2]) * r  # row high-pass
    ll = (lo[0::2] + lo[1::2]) * r
    hl = (lo[0::2] - lo[1::2]) * r
    lh = (hi[0::2] + hi[1::2]) * r
    hh = (hi[0::2] - hi[1::2]) * r
    return ll, lh, hl, hh


class TestDwt2:
    def test_hand_example(self):
        b = dwt2(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert (b.ll[0, 0], b.lh[0, 0], b.hl[0, 0], b.hh[0, 0]) == (5.0, -1.0, -2.0, 0.0)

    def test_constant_image(self):
        b = dwt2(np.full((2, 2), 1.5))
        assert b.ll[0, 0] == 3.0
        assert b.lh[0, 0] == b.hl[0, 0] == b.hh[0, 0] == 0.0

    def test_odd_width_rejected(self):
        with pytest.raises(InvalidShapeError):
            dwt2(np.zeros((2, 3)))

    def test_matches_separable_filter_oracle(self):
        x = Rng(0).randn((8, 12))
        got = dwt2(x)
        for a, b in zip((got.ll, got.lh, got.hl, got.hh), naive_dwt2(x)):
            np.testing.assert_allclose(a, b, atol=1e-14)

    def test_channels_independent(self):
        x = Rng(1).randn((6, 4, 3))
        b = dwt2(x)
        for c in range(3):
            np.testing.assert_array_equal(b.hh[..., c], dwt2(x[..., c]).hh)

    def test_batched_equals_single(self):
        x = Rng(2).randn((2, 4, 4, 1))
        b = dwt2(x)
        np.testing.assert_array_equal(b.lh[1], dwt2(x[1]).lh)


class TestIdwt2:
    def test_hand_example_inverse(self):
        one = lambda v: np.array([[v]])
        out = idwt2(SubbandSet(one(5.0), one(-1.0), one(-2.0), one(0.0)))
        np.testing.assert_array_equal(out, [[1.0, 2.0], [3.0, 4.0]])

    def test_round_trip(self):
        x = Rng(3).randn((16, 16, 3))
        assert np.max(np.abs(idwt2(dwt2(x)) - x)) <= 1e-6

    def test_zero_bands(self):
        z = np.zeros((2, 2))
        np.testing.assert_array_equal(idwt2(SubbandSet(z, z, z, z)), np.zeros((4, 4)))

    def test_mismatched_bands(self):
        with pytest.raises(InvalidShapeError):
            idwt2(SubbandSet(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 3))))


class TestPyramid:
    def test_single_level_equals_dwt2(self):
        x = Rng(4).randn((8, 8))
        p = decompose(x, 1)
        np.testing.assert_array_equal(p.coarse_ll, dwt2(x).ll)
        np.testing.assert_array_equal(p.detail(1).hh, dwt2(x).hh)

    def test_constant_three_levels(self):
        p = decompose(np.full((8, 8), 0.25), 3)
        assert p.coarse_ll.shape == (1, 1)
        assert p.coarse_ll[0, 0] == 8 * 0.25
        for d in p.details:
            for band in d.details():
                assert not np.any(band)

    def test_detail_extents_grow(self):
        p = decompose(np.zeros((32, 16)), 3)
        shapes = [d.lh.shape for d in p.details]
        assert shapes == [(4, 2), (8, 4), (16, 8)]
        assert p.detail(1).lh.shape == (16, 8)

    def test_round_trip_64(self):
        x = Rng(5).randn((64, 64))
        assert np.max(np.abs(reconstruct(decompose(x, 2)) - x)) <= 1e-6

    def test_indivisible(self):
        with pytest.raises(InvalidShapeError):
            decompose(np.zeros((12, 12)), 3)

    def test_levels_validated(self):
        with pytest.raises(InvalidArgumentError):
            decompose(np.zeros((4, 4)), 0)

    def test_reconstruct_mirrors_decompose(self):
        p = decompose(np.full((8, 8), 2.0), 3)
        np.testing.assert_array_equal(reconstruct(p), np.full((8, 8), 2.0))
        hand = SubbandPyramid(np.array([[5.0]]), [SubbandSet(*(np.array([[v]]) for v in (5.0, -1.0, -2.0, 0.0)))])
        np.testing.assert_array_equal(reconstruct(hand), [[1.0, 2.0], [3.0, 4.0]])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
    def test_perfect_reconstruction_and_energy(self, levels, fh, fw, seed):
        f = 2**levels
        x = Rng(seed).randn((f * fh, f * fw, 2))
        p = decompose(x, levels)
        assert np.max(np.abs(reconstruct(p) - x)) <= 1e-6
        e = float(np.sum(x * x))
        assert abs(p.energy() - e) <= 1e-9 * e

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
    def test_linearity(self, a, b, seed):
        r = Rng(seed)
        x, y = r.randn((8, 8)), r.randn((8, 8))
        lhs = decompose(a * x + b * y, 2).to_vector()
        rhs = a * decompose(x, 2).to_vector() + b * decompose(y, 2).to_vector()
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)


class TestHaarMatrix:
    def test_orthogonal_4x4(self):
        a = haar_matrix(4, 4)
        np.testing.assert_allclose(a @ a.T, np.eye(16), atol=1e-10)

    def test_applies_pyramid(self):
        x = Rng(6).randn((8, 8))
        np.testing.assert_allclose(haar_matrix(8, 8, 2) @ x.ravel(), decompose(x, 2).to_vector(), atol=1e-14)
