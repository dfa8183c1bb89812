import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from PIL import Image

from gcpstereo._validation import DegenerateInputError
from gcpstereo.imageio import (
    ImageFormatError,
    colorize,
    load_disparity_png,
    load_gray,
    load_kitti_gt,
    normalize,
    save_disparity_png,
)


def write_pgm(path, width, height, data, maxval=255):
    header = f"P5\n{width} {height}\n{maxval}\n".encode()
    path.write_bytes(header + bytes(data))
    return path


def write_png16(path, arr):
    Image.fromarray(np.asarray(arr, dtype=np.uint16)).save(path)
    return path


class TestLoadGray:
    def test_pgm_two_by_two(self, tmp_path):
        img = load_gray(write_pgm(tmp_path / "a.pgm", 2, 2, [0, 255, 0, 255]))
        assert img.shape == (2, 2)
        np.testing.assert_array_equal(img.ravel(), [0, 1, 0, 1])

    def test_pgm_single_pixel(self, tmp_path):
        img = load_gray(write_pgm(tmp_path / "b.pgm", 1, 1, [128]))
        assert img[0, 0] == 128 / 255

    def test_corrupt_header(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P5\nnot a header\x00\x01")
        with pytest.raises(ImageFormatError):
            load_gray(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_gray(tmp_path / "nope.png")

    def test_sixteen_bit(self, tmp_path):
        img = load_gray(write_png16(tmp_path / "c.png", [[0, 65535]]))
        np.testing.assert_array_equal(img, [[0.0, 1.0]])

    def test_rgb_luma(self, tmp_path):
        rgb = np.zeros((1, 3, 3), dtype=np.uint8)
        rgb[0, 0, 0] = rgb[0, 1, 1] = rgb[0, 2, 2] = 255
        Image.fromarray(rgb, mode="RGB").save(tmp_path / "rgb.png")
        img = load_gray(tmp_path / "rgb.png")
        np.testing.assert_allclose(img[0], [0.299, 0.587, 0.114])


class TestNormalize:
    def test_two_point(self):
        np.testing.assert_allclose(normalize([[0.0, 1.0]]), [[-1.0, 1.0]])

    def test_constant_rejected(self):
        with pytest.raises(DegenerateInputError):
            normalize(np.ones((2, 2)))

    def test_single_pixel_rejected(self):
        with pytest.raises(DegenerateInputError):
            normalize([[0.5]])

    @settings(max_examples=50, deadline=None)
    @given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 6)),
                      elements=st.floats(0, 1)))
    def test_mean_std_and_idempotence(self, img):
        if np.ptp(img) < 1e-6:
            return
        out = normalize(img)
        assert abs(out.mean()) < 1e-5
        assert abs(out.std() - 1.0) < 1e-5
        np.testing.assert_allclose(normalize(out), out, atol=1e-5)


class TestKittiGt:
    def test_decoding(self, tmp_path):
        gt = load_kitti_gt(write_png16(tmp_path / "gt.png", [[0, 256, 12800]]))
        assert np.isnan(gt[0, 0])
        assert gt[0, 1] == 1.0
        assert gt[0, 2] == 50.0

    def test_eight_bit_rejected(self, tmp_path):
        Image.fromarray(np.zeros((2, 2), np.uint8), mode="L").save(tmp_path / "g8.png")
        with pytest.raises(ImageFormatError):
            load_kitti_gt(tmp_path / "g8.png")

    def test_shape_mismatch(self, tmp_path):
        path = write_png16(tmp_path / "gt.png", np.zeros((2, 3)))
        with pytest.raises(ValueError):
            load_kitti_gt(path, shape=(3, 2))


class TestSaveDisparity:
    def test_encoding(self, tmp_path):
        save_disparity_png(np.array([[1.0, 0.0, np.nan]]), tmp_path / "d.png")
        raw = np.asarray(Image.open(tmp_path / "d.png"))
        np.testing.assert_array_equal(raw, [[256, 0, 0]])

    @settings(max_examples=30, deadline=None)
    @given(hnp.arrays(np.int64, st.tuples(st.integers(1, 5), st.integers(1, 5)),
                      elements=st.integers(1, 228)))
    def test_round_trip(self, tmp_path_factory, disp):
        path = tmp_path_factory.mktemp("rt") / "d.png"
        save_disparity_png(disp, path)
        np.testing.assert_array_equal(load_kitti_gt(path), disp)
        np.testing.assert_array_equal(load_disparity_png(path), disp)

    def test_preview(self, tmp_path):
        save_disparity_png(np.arange(6.0).reshape(2, 3), tmp_path / "d.png", tmp_path / "p.png")
        preview = np.asarray(Image.open(tmp_path / "p.png"))
        assert preview.shape == (2, 3, 3) and preview.dtype == np.uint8

    def test_out_of_range(self, tmp_path):
        with pytest.raises(ValueError):
            save_disparity_png(np.array([[300.0]]), tmp_path / "d.png")

    def test_colorize_unknown_black(self):
        rgb = colorize(np.array([[np.nan, 1.0]]))
        np.testing.assert_array_equal(rgb[0, 0], 0)
