import numpy as np
import pytest

from mscgm import synthetic
from mscgm.core import Rng


class TestCorpora:
    def test_white_noise_shape_and_determinism(self):
        a = synthetic.white_noise_corpus(3, 8, Rng(0))
        b = synthetic.white_noise_corpus(3, 8, Rng(0))
        assert np.shape(a) == (3, 8, 8)
        np.testing.assert_array_equal(a, b)

    def test_power_law_covariance(self):
        c = synthetic.power_law_covariance(4, 1.0, 2.0)
        assert c.shape == (16, 16)
        np.testing.assert_allclose(c, c.T)
        assert np.all(np.linalg.eigvalsh(c) > 0)
        # correlation decays with distance
        assert c[0, 1] > c[0, 2] > c[0, 3]

    @pytest.mark.parametrize("transform", ["square", "exp", "none"])
    def test_power_law_field(self, transform):
        imgs = synthetic.power_law_field_corpus(2, 16, Rng(1), transform=transform)
        assert np.shape(imgs) == (2, 16, 16) and np.all(np.isfinite(imgs))

    def test_beads(self):
        imgs = synthetic.bead_corpus(2, 32, Rng(2))
        assert np.shape(imgs) == (2, 32, 32)
        assert np.all(np.isfinite(imgs))

    def test_shapes_range(self):
        im = synthetic.shapes_image(32, Rng(3))
        assert im.shape[:2] == (32, 32)
        assert im.min() >= -0.9 and im.max() <= 0.9

    def test_blur_pairs(self):
        y, x = synthetic.blur_pairs(4, 16, 1.5, Rng(4))
        assert y.shape == x.shape == (4, 16, 16, 1)
        # blurring lowers total variation
        tv = lambda a: np.abs(np.diff(a, axis=1)).sum()
        assert tv(y) < tv(x)
