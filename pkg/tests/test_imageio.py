import io
import struct
import zlib

import numpy as np
import pytest
from PIL import Image

from mscgm import imageio
from mscgm.core import Rng
from mscgm.errors import FormatError


def rand_u(shape, dtype, seed=0):
    top = np.iinfo(dtype).max + 1
    return Rng(seed).integers(0, top, shape).astype(dtype)


class TestPng:
    @pytest.mark.parametrize("shape,dtype", [((5, 7), np.uint8), ((5, 7), np.uint16),
                                             ((4, 6, 3), np.uint8), ((4, 6, 3), np.uint16)])
    def test_round_trip(self, shape, dtype):
        a = rand_u(shape, dtype)
        b, maxval = imageio.decode_png(imageio.encode_png(a))
        assert b.dtype == dtype and maxval == np.iinfo(dtype).max
        np.testing.assert_array_equal(a, b)

    def test_pillow_reads_ours_8bit(self):
        a = rand_u((9, 11, 3), np.uint8, 1)
        np.testing.assert_array_equal(np.asarray(Image.open(io.BytesIO(imageio.encode_png(a)))), a)

    def test_pillow_reads_ours_16bit_gray(self):
        a = rand_u((9, 11), np.uint16, 2)
        np.testing.assert_array_equal(np.asarray(Image.open(io.BytesIO(imageio.encode_png(a)))).astype(np.uint16), a)

    @pytest.mark.parametrize("mode,dtype", [("L", np.uint8), ("RGB", np.uint8), ("I;16", np.uint16)])
    def test_we_read_pillow_filtered_output(self, mode, dtype):
        # Pillow uses adaptive row filters, which exercises every unfilter branch
        shape = (32, 40, 3) if mode == "RGB" else (32, 40)
        y, x = np.mgrid[:32, :40]
        base = (y * 7 + x * 3 + (x * y) % 11).astype(np.int64)
        a = np.stack([base, base * 2, base // 2], -1) if mode == "RGB" else base
        a = (a * (1 if dtype == np.uint8 else 257) % (np.iinfo(dtype).max + 1)).astype(dtype)
        buf = io.BytesIO()
        (Image.fromarray(a, mode) if mode != "I;16" else Image.fromarray(a)).save(buf, format="PNG", optimize=True)
        got, _ = imageio.decode_png(buf.getvalue())
        np.testing.assert_array_equal(got, a.reshape(shape))

    def test_alpha_dropped(self):
        a = rand_u((4, 4, 4), np.uint8, 3)
        buf = io.BytesIO()
        Image.fromarray(a, "RGBA").save(buf, format="PNG")
        got, _ = imageio.decode_png(buf.getvalue())
        np.testing.assert_array_equal(got, a[..., :3])

    def test_bad_signature(self):
        with pytest.raises(FormatError, match="offset 0"):
            imageio.decode_png(b"GIF89a" + bytes(20))

    def test_crc_mismatch(self):
        data = bytearray(imageio.encode_png(np.zeros((2, 2), np.uint8)))
        data[20] ^= 0xFF
        with pytest.raises(FormatError, match="CRC"):
            imageio.decode_png(bytes(data))

    def test_truncated(self):
        data = imageio.encode_png(rand_u((8, 8), np.uint8))
        with pytest.raises(FormatError):
            imageio.decode_png(data[:40])

    def test_palette_rejected(self):
        buf = io.BytesIO()
        Image.fromarray(rand_u((4, 4), np.uint8)).convert("P").save(buf, format="PNG")
        with pytest.raises(FormatError, match="palette"):
            imageio.decode_png(buf.getvalue())

    def test_short_raster(self):
        ihdr = struct.pack(">IIBBBBB", 4, 4, 8, 0, 0, 0, 0)
        chunk = lambda t, p: struct.pack(">I", len(p)) + t + p + struct.pack(">I", zlib.crc32(t + p) & 0xFFFFFFFF)
        data = imageio.PNG_SIGNATURE + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(b"\0" * 5)) + chunk(b"IEND", b"")
        with pytest.raises(FormatError):
            imageio.decode_png(data)


class TestPgm:
    @pytest.mark.parametrize("dtype", [np.uint8, np.uint16])
    def test_round_trip(self, dtype):
        a = rand_u((6, 5), dtype, 4)
        b, maxval = imageio.decode_pgm(imageio.encode_pgm(a))
        np.testing.assert_array_equal(a, b)
        assert maxval == np.iinfo(dtype).max

    def test_comments_and_big_endian(self):
        data = b"P5\n# made by hand\n2 1\n# another\n65535\n" + b"\x01\x02\xff\xff"
        arr, maxval = imageio.decode_pgm(data)
        assert maxval == 65535
        np.testing.assert_array_equal(arr, [[0x0102, 0xFFFF]])

    def test_pillow_agrees(self):
        a = rand_u((7, 9), np.uint8, 5)
        np.testing.assert_array_equal(np.asarray(Image.open(io.BytesIO(imageio.encode_pgm(a)))), a)

    def test_truncated(self):
        with pytest.raises(FormatError, match="truncated"):
            imageio.decode_pgm(b"P5 4 4 255\n" + bytes(10))

    def test_ascii_pgm_rejected(self):
        with pytest.raises(FormatError):
            imageio.decode_pgm(b"P2 1 1 255\n0")


class TestFloatImages:
    def test_16bit_max_maps_to_one(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(imageio.encode_pgm(np.array([[0, 65535]], np.uint16)))
        x = imageio.read_image(p)
        assert x.shape == (1, 2, 1)
        assert x[0, 0, 0] == -1.0 and x[0, 1, 0] == 1.0

    def test_write_read_16bit_png(self, tmp_path):
        x = np.clip(Rng(6).randn((8, 8, 3)) * 0.4, -1, 1)
        imageio.write_image(tmp_path / "o.png", x)
        y = imageio.read_image(tmp_path / "o.png")
        assert np.max(np.abs(x - y)) <= 1.0 / 65535 + 1e-12

    def test_write_clips(self, tmp_path):
        imageio.write_image(tmp_path / "c.png", np.array([[-3.0, 3.0]]))
        arr, _ = imageio.read_raw(tmp_path / "c.png")
        np.testing.assert_array_equal(arr, [[0, 65535]])

    def test_unknown_format(self, tmp_path):
        (tmp_path / "x.bmp").write_bytes(b"BM" + bytes(30))
        with pytest.raises(FormatError, match="unrecognized"):
            imageio.read_image(tmp_path / "x.bmp")
