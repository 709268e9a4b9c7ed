import numpy as np
import pytest

from mscgm import imageio
from mscgm.core import Rng
from mscgm.data import DataConfig, Degradation, PairedDataset, build_dataset, degrade, load_dataset, read_manifest
from mscgm.errors import FormatError, InsufficientDataError, InvalidArgumentError, InvalidShapeError


def write_pair(dir_, name, size=16, seed=0):
    r = Rng(seed)
    a = r.integers(0, 256, (size, size)).astype(np.uint8)
    b = r.integers(0, 256, (size, size)).astype(np.uint8)
    (dir_ / f"{name}_y.png").write_bytes(imageio.encode_png(a))
    (dir_ / f"{name}_x.png").write_bytes(imageio.encode_png(b))
    return a, b


def manifest(dir_, lines):
    p = dir_ / "pairs.tsv"
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p


class TestManifest:
    def test_two_pairs(self, tmp_path):
        write_pair(tmp_path, "a", seed=1)
        write_pair(tmp_path, "b", seed=2)
        m = manifest(tmp_path, ["# comment", "a_y.png\ta_x.png", "", "b_y.png\tb_x.png"])
        assert len(load_dataset(m, DataConfig(levels=2))) == 2
        assert len(load_dataset(m, DataConfig(levels=2, patch=8, patches_per_image=3))) == 6

    def test_values_normalized(self, tmp_path):
        a, b = write_pair(tmp_path, "a")
        ds = load_dataset(manifest(tmp_path, ["a_y.png\ta_x.png"]), DataConfig(levels=1))
        np.testing.assert_allclose(ds.y[0, ..., 0], a / 255 * 2 - 1, atol=1e-15)
        np.testing.assert_allclose(ds.x0[0, ..., 0], b / 255 * 2 - 1, atol=1e-15)

    def test_cwd_fallback(self, tmp_path, monkeypatch):
        write_pair(tmp_path, "a")
        sub = tmp_path / "lists"
        sub.mkdir()
        monkeypatch.chdir(tmp_path)
        pairs = read_manifest(manifest(sub, ["a_y.png\ta_x.png"]))
        assert pairs[0][0] == str(tmp_path / "a_y.png")

    def test_malformed_line(self, tmp_path):
        with pytest.raises(FormatError, match="pairs.tsv:1"):
            read_manifest(manifest(tmp_path, ["only_one_column.png"]))

    def test_missing_files_listed(self, tmp_path):
        write_pair(tmp_path, "a")
        m = manifest(tmp_path, ["a_y.png\ta_x.png", "nope1.png\tnope2.png"])
        with pytest.raises(FormatError) as exc:
            load_dataset(m)
        assert "nope1.png" in str(exc.value) and "nope2.png" in str(exc.value)

    def test_empty_manifest(self, tmp_path):
        with pytest.raises(InsufficientDataError):
            load_dataset(manifest(tmp_path, ["# nothing"]))

    def test_shape_mismatch(self, tmp_path):
        write_pair(tmp_path, "a", size=16)
        write_pair(tmp_path, "b", size=8)
        with pytest.raises(InvalidShapeError, match="shape mismatch"):
            load_dataset(manifest(tmp_path, ["a_y.png\tb_x.png"]), DataConfig(levels=1))

    def test_indivisible(self, tmp_path):
        write_pair(tmp_path, "a", size=12)
        with pytest.raises(InvalidShapeError, match="divisible"):
            load_dataset(manifest(tmp_path, ["a_y.png\ta_x.png"]), DataConfig(levels=3))

    def test_pgm_max_is_plus_one(self, tmp_path):
        img = np.full((4, 4), 65535, np.uint16)
        (tmp_path / "y.pgm").write_bytes(imageio.encode_pgm(img))
        (tmp_path / "x.pgm").write_bytes(imageio.encode_pgm(img))
        ds = load_dataset(manifest(tmp_path, ["y.pgm\tx.pgm"]), DataConfig(levels=1))
        assert np.all(ds.x0 == 1.0)


class TestPatching:
    def test_center_crop(self):
        x = np.arange(64.0).reshape(8, 8)
        ds = build_dataset([x], [x], DataConfig(patch=4, levels=1))
        np.testing.assert_array_equal(ds.x0[0, ..., 0], x[2:6, 2:6])

    def test_random_crops_deterministic(self):
        x = Rng(0).randn((16, 16))
        a = build_dataset([x], [x], DataConfig(patch=4, patches_per_image=5, levels=1, seed=3))
        b = build_dataset([x], [x], DataConfig(patch=4, patches_per_image=5, levels=1, seed=3))
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.y, a.x0)

    def test_patch_too_large(self):
        with pytest.raises(InvalidShapeError):
            build_dataset([np.zeros((4, 4))], [np.zeros((4, 4))], DataConfig(patch=8, levels=1))

    def test_mixed_sizes_need_patch(self):
        with pytest.raises(InvalidShapeError, match="patch"):
            build_dataset([np.zeros((4, 4)), np.zeros((8, 8))], [np.zeros((4, 4)), np.zeros((8, 8))],
                          DataConfig(levels=1))

    def test_split_and_subset(self):
        ds = PairedDataset(np.zeros((5, 4, 4, 1)), np.zeros((5, 4, 4, 1)))
        tr, te = ds.split(3)
        assert len(tr) == 3 and len(te) == 2
        with pytest.raises(InvalidShapeError):
            ds.check_levels(3)

    def test_config_validated(self):
        with pytest.raises(InvalidArgumentError):
            DataConfig(patch=0)


class TestDegradation:
    def test_parse(self):
        d = Degradation.parse("blur:2,noise:0.05,bicubic:4")
        assert (d.resize, d.factor, d.blur_sigma, d.noise) == ("bicubic", 4, 2.0, 0.05)

    def test_parse_unknown(self):
        with pytest.raises(InvalidArgumentError):
            Degradation.parse("sharpen:3")

    def test_inactive_is_identity(self):
        x = Rng(0).randn((8, 8, 1))
        np.testing.assert_array_equal(degrade(x, Degradation(), Rng(1)), x)

    def test_blur_noise_deterministic(self):
        x = Rng(0).randn((16, 16))
        cfg = DataConfig(levels=1, seed=7, degradation=Degradation(blur_sigma=2.0, noise=0.05))
        a = build_dataset([x], [x], cfg)
        b = build_dataset([x], [x], cfg)
        assert a.y.tobytes() == b.y.tobytes()
        assert not np.array_equal(a.y, a.x0)

    def test_blur_matches_scipy(self):
        from scipy.ndimage import gaussian_filter
        x = Rng(2).randn((16, 16, 1))
        got = degrade(x, Degradation(blur_sigma=1.5))
        np.testing.assert_allclose(got[..., 0], gaussian_filter(x[..., 0], 1.5, mode="reflect"), atol=1e-12)

    @pytest.mark.parametrize("method", ["box", "bicubic"])
    def test_resize_removes_detail(self, method):
        i, j = np.indices((16, 16))
        x = ((-1.0) ** (i + j))[..., None] * 0.5
        got = degrade(x, Degradation(resize=method, factor=4))
        assert got.shape == x.shape
        assert np.abs(got).max() < 0.5 * np.abs(x).max()

    def test_box_keeps_constant(self):
        x = np.full((8, 8, 1), 0.25)
        np.testing.assert_allclose(degrade(x, Degradation(resize="box", factor=2)), x, atol=1e-6)
