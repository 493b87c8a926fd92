import numpy as np
import pytest

from vstbench.depth import DepthMap
from vstbench.formats import (
    FormatError,
    read_depth,
    read_png_gray,
    read_warp_field,
    write_depth,
    write_error_heatmap,
    write_png_gray,
    write_warp_field,
)
from vstbench.passthrough import WarpField


class TestPNG:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, (24, 31))
        path = tmp_path / "img.png"
        write_png_gray(img, path)
        back = read_png_gray(path)
        assert back.shape == img.shape
        assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12

    def test_deterministic_bytes(self, tmp_path):
        img = np.linspace(0, 1, 300).reshape(15, 20)
        write_png_gray(img, tmp_path / "a.png")
        write_png_gray(img, tmp_path / "b.png")
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()

    def test_rejects_non_2d(self, tmp_path):
        with pytest.raises(FormatError):
            write_png_gray(np.zeros((3, 3, 3)), tmp_path / "x.png")

    def test_rejects_non_png(self, tmp_path):
        p = tmp_path / "fake.png"
        p.write_bytes(b"not a png")
        with pytest.raises(FormatError):
            read_png_gray(p)


class TestDepthSidecar:
    def test_round_trip_with_invalid_pixels(self, tmp_path):
        vals = np.linspace(0.5, 5.0, 60).reshape(6, 10)
        valid = np.ones((6, 10), bool)
        valid[2, 3] = False
        d = DepthMap(vals, valid)
        path = tmp_path / "d.depth"
        write_depth(d, path)
        back = read_depth(path)
        assert np.array_equal(back.valid, valid)
        assert np.allclose(back.values[valid], vals[valid], atol=1e-6)

    def test_header_checked(self, tmp_path):
        p = tmp_path / "bad.depth"
        p.write_bytes(b"XXXX" + b"\x00" * 12)
        with pytest.raises(FormatError, match="not a depth sidecar"):
            read_depth(p)

    def test_truncation_detected(self, tmp_path):
        d = DepthMap.constant(1.0, 4, 4)
        path = tmp_path / "d.depth"
        write_depth(d, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(FormatError, match="truncated"):
            read_depth(path)


class TestWarpField:
    def test_round_trip(self, tmp_path):
        gu = np.array([0, 4, 8, 9])
        gv = np.array([0, 4, 7])
        rng = np.random.default_rng(1)
        wf = WarpField(
            grid_u=gu,
            grid_v=gv,
            dst=rng.uniform(0, 100, (3, 4, 2)),
            dst_depth=rng.uniform(0.5, 3, (3, 4)),
            valid=rng.random((3, 4)) > 0.2,
            stride=4,
        )
        path = tmp_path / "w.warp"
        write_warp_field(wf, path)
        back = read_warp_field(path)
        assert np.array_equal(back.grid_u, gu)
        assert np.array_equal(back.grid_v, gv)
        assert np.allclose(back.dst, wf.dst, atol=1e-5)
        assert np.array_equal(back.valid, wf.valid)
        assert back.stride == 4


class TestHeatmap:
    def test_fixed_ramp(self, tmp_path):
        err = np.array([[0.0, 2.5], [5.0, 10.0]])
        path = tmp_path / "h.png"
        write_error_heatmap(err, path, ramp_max=5.0)
        img = read_png_gray(path)
        assert img[0, 0] == 0.0
        assert img[0, 1] == pytest.approx(0.5, abs=1 / 255)
        assert img[1, 0] == 1.0
        assert img[1, 1] == 1.0  # clipped

    def test_ramp_must_be_positive(self, tmp_path):
        with pytest.raises(FormatError):
            write_error_heatmap(np.zeros((2, 2)), tmp_path / "h.png", ramp_max=0.0)
